#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace grpolab {

// Seed derivation and sampling helpers. All randomness in the project flows
// through these so that runs are bit-reproducible for a given master seed,
// independent of standard-library distribution internals.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed for (master, stream). Streams are named by small
// integer ids so concurrent consumers never share a generator.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x51ed2701a9b3c4d5ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform double in [0, 1) from the top 53 bits of one generator draw.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Index into a probability vector by inverse CDF walk. probs must sum to ~1;
// any residual mass from rounding goes to the last entry.
inline std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
}

inline std::size_t rand_below(Rng& rng, std::size_t n) {
    return n <= 1 ? 0 : static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

template <typename T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rand_below(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace grpolab

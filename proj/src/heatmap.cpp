#include "grpolab/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace grpolab {

namespace {

using nlohmann::json;

double vector_norm(const double* v, std::size_t d) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += v[c] * v[c];
    return std::sqrt(s);
}

void normalize(double* v, std::size_t d) {
    const double nrm = vector_norm(v, d);
    for (std::size_t c = 0; c < d; ++c) v[c] /= nrm;
}

// v -= (v . u / u . u) u for a unit-ish direction u
void remove_projection(std::vector<double>& v, const std::vector<double>& u) {
    double dot = 0.0, uu = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) {
        dot += v[c] * u[c];
        uu += u[c] * u[c];
    }
    if (uu <= 0.0) return;
    const double f = dot / uu;
    for (std::size_t c = 0; c < v.size(); ++c) v[c] -= f * u[c];
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return 0;
    if (i >= static_cast<std::ptrdiff_t>(n)) return n - 1;
    return static_cast<std::size_t>(i);
}

} // namespace

FeatureGrid make_feature_grid(int layer, std::size_t m, std::size_t n, std::size_t d) {
    if (m == 0 || n == 0 || d == 0)
        throw std::invalid_argument("make_feature_grid: degenerate shape");
    FeatureGrid g;
    g.layer = layer;
    g.m = m;
    g.n = n;
    g.d = d;
    g.values.assign(m * n * d, 0.0);
    return g;
}

double cosine_distance(const double* u, const double* v, std::size_t d) {
    const double nu = vector_norm(u, d);
    const double nv = vector_norm(v, d);
    if (nu == 0.0 && nv == 0.0) return 0.0;
    if (nu == 0.0 || nv == 0.0) return 1.0;
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += u[c] * v[c];
    return std::clamp(1.0 - dot / (nu * nv), 0.0, 2.0);
}

double cosine_distance(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size())
        throw std::invalid_argument("cosine_distance: dimension mismatch");
    return cosine_distance(u.data(), v.data(), u.size());
}

Heatmap layer_heatmap(const FeatureGrid& query, const FeatureGrid& reference, std::size_t k) {
    if (!query.same_shape(reference))
        throw std::invalid_argument("layer_heatmap: query/reference shapes differ");
    Heatmap h;
    h.source = Heatmap::Source::single_layer;
    h.layer = query.layer;
    h.m = query.m;
    h.n = query.n;
    h.values.assign(h.m * h.n, 0.0);
    const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k);
    for (std::size_t i = 0; i < h.m; ++i) {
        const std::size_t i_lo = static_cast<std::size_t>(
            std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - kk));
        const std::size_t i_hi = std::min(h.m - 1, i + k);
        for (std::size_t j = 0; j < h.n; ++j) {
            const std::size_t j_lo = static_cast<std::size_t>(
                std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(j) - kk));
            const std::size_t j_hi = std::min(h.n - 1, j + k);
            double best = 2.0;
            for (std::size_t ii = i_lo; ii <= i_hi; ++ii)
                for (std::size_t jj = j_lo; jj <= j_hi; ++jj)
                    best = std::min(best,
                                    cosine_distance(query.at(i, j), reference.at(ii, jj), query.d));
            h.at(i, j) = best;
        }
    }
    return h;
}

Heatmap aggregate(const std::vector<Heatmap>& maps) {
    if (maps.empty()) throw std::invalid_argument("aggregate: empty heatmap list");
    Heatmap out;
    out.source = Heatmap::Source::aggregated;
    out.m = maps.front().m;
    out.n = maps.front().n;
    out.values.assign(out.m * out.n, 0.0);
    for (const Heatmap& h : maps) {
        if (h.m != out.m || h.n != out.n)
            throw std::invalid_argument("aggregate: heatmap shapes differ");
        for (std::size_t p = 0; p < out.values.size(); ++p) out.values[p] += h.values[p];
    }
    const double inv = 1.0 / static_cast<double>(maps.size());
    for (double& x : out.values) x *= inv;
    return out;
}

std::vector<SynthPair> synth_features(const SynthSpec& spec, Rng& rng) {
    if (spec.m == 0 || spec.n == 0 || spec.d < 2 || spec.layers == 0)
        throw std::invalid_argument("synth_features: degenerate spec");
    if (spec.defect) {
        const DefectRect& r = *spec.defect;
        if (r.h == 0 || r.w == 0 || r.i0 + r.h > spec.m || r.j0 + r.w > spec.n)
            throw std::invalid_argument("synth_features: defect rectangle out of bounds");
    }

    std::vector<SynthPair> out;
    out.reserve(spec.layers);
    for (std::size_t l = 0; l < spec.layers; ++l) {
        FeatureGrid ref = make_feature_grid(static_cast<int>(l), spec.m, spec.n, spec.d);

        // Smooth positive field: per channel one low-frequency plane wave on
        // a constant pedestal, so neighbouring patch vectors stay nearly
        // parallel and never vanish.
        std::vector<double> fu(spec.d), fv(spec.d), phase(spec.d);
        for (std::size_t c = 0; c < spec.d; ++c) {
            fu[c] = 2.0 * uniform01(rng) - 1.0;
            fv[c] = 2.0 * uniform01(rng) - 1.0;
            phase[c] = 2.0 * M_PI * uniform01(rng);
        }
        for (std::size_t i = 0; i < spec.m; ++i) {
            for (std::size_t j = 0; j < spec.n; ++j) {
                double* v = ref.at(i, j);
                for (std::size_t c = 0; c < spec.d; ++c) {
                    const double arg = 2.0 * M_PI *
                                           (fu[c] * static_cast<double>(i) /
                                                static_cast<double>(spec.m) +
                                            fv[c] * static_cast<double>(j) /
                                                static_cast<double>(spec.n)) +
                                       phase[c];
                    v[c] = 1.5 + std::sin(arg);
                }
                normalize(v, spec.d);
            }
        }

        FeatureGrid query = make_feature_grid(static_cast<int>(l), spec.m, spec.n, spec.d);
        for (std::size_t i = 0; i < spec.m; ++i) {
            for (std::size_t j = 0; j < spec.n; ++j) {
                const std::size_t si =
                    clamp_index(static_cast<std::ptrdiff_t>(i) - spec.shift_i, spec.m);
                const std::size_t sj =
                    clamp_index(static_cast<std::ptrdiff_t>(j) - spec.shift_j, spec.n);
                std::copy(ref.at(si, sj), ref.at(si, sj) + spec.d, query.at(i, j));
            }
        }

        if (spec.defect) {
            for (std::size_t i = 0; i < spec.m; ++i) {
                for (std::size_t j = 0; j < spec.n; ++j) {
                    if (!spec.defect->contains(i, j)) continue;
                    // local window mean of the reference field
                    std::vector<double> mean(spec.d, 0.0);
                    std::size_t cnt = 0;
                    for (std::size_t ii = (i > 0 ? i - 1 : 0); ii <= std::min(i + 1, spec.m - 1);
                         ++ii) {
                        for (std::size_t jj = (j > 0 ? j - 1 : 0);
                             jj <= std::min(j + 1, spec.n - 1); ++jj) {
                            const double* r = ref.at(ii, jj);
                            for (std::size_t c = 0; c < spec.d; ++c) mean[c] += r[c];
                            ++cnt;
                        }
                    }
                    for (double& x : mean) x /= static_cast<double>(cnt);
                    const std::vector<double> center(ref.at(i, j), ref.at(i, j) + spec.d);

                    std::vector<double> defect(spec.d);
                    for (;;) {
                        for (std::size_t c = 0; c < spec.d; ++c)
                            defect[c] = 2.0 * uniform01(rng) - 1.0;
                        remove_projection(defect, center);
                        remove_projection(defect, mean);
                        if (vector_norm(defect.data(), spec.d) > 1e-6) break;
                    }
                    normalize(defect.data(), spec.d);
                    std::copy(defect.begin(), defect.end(), query.at(i, j));
                }
            }
        }
        out.push_back(SynthPair{std::move(ref), std::move(query)});
    }
    return out;
}

void save_feature_grid(const FeatureGrid& grid, const std::string& path) {
    json j;
    j["m"] = grid.m;
    j["n"] = grid.n;
    j["d"] = grid.d;
    j["layer"] = grid.layer;
    j["values"] = grid.values;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_feature_grid: cannot open " + path);
    out << j.dump() << '\n';
}

FeatureGrid load_feature_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_feature_grid: cannot open " + path);
    json j;
    in >> j;
    FeatureGrid g = make_feature_grid(j.at("layer").get<int>(), j.at("m").get<std::size_t>(),
                                      j.at("n").get<std::size_t>(), j.at("d").get<std::size_t>());
    g.values = j.at("values").get<std::vector<double>>();
    if (g.values.size() != g.m * g.n * g.d)
        throw std::runtime_error("load_feature_grid: value count does not match shape in " + path);
    return g;
}

void heatmap_to_csv(const Heatmap& h, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("heatmap_to_csv: cannot open " + path);
    for (std::size_t i = 0; i < h.m; ++i) {
        for (std::size_t j = 0; j < h.n; ++j)
            out << json(h.at(i, j)).dump() << (j + 1 == h.n ? "" : ",");
        out << '\n';
    }
}

void heatmap_to_pgm(const Heatmap& h, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("heatmap_to_pgm: cannot open " + path);
    out << "P2\n" << h.n << ' ' << h.m << "\n255\n";
    for (std::size_t i = 0; i < h.m; ++i) {
        for (std::size_t j = 0; j < h.n; ++j) {
            const int px = static_cast<int>(std::lround(std::clamp(h.at(i, j), 0.0, 2.0) * 127.5));
            out << px << (j + 1 == h.n ? '\n' : ' ');
        }
    }
}

} // namespace grpolab

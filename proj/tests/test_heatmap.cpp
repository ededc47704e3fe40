#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "grpolab/heatmap.hpp"
#include "test_util.hpp"

using namespace grpolab;

namespace {

// Test-side oracle: naive cosine and an exhaustive double loop over the
// window, written independently of the library path.
double oracle_cosine_dist(const double* u, const double* v, std::size_t d) {
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        uu += u[c] * u[c];
        vv += v[c] * v[c];
        uv += u[c] * v[c];
    }
    if (uu == 0.0 && vv == 0.0) return 0.0;
    if (uu == 0.0 || vv == 0.0) return 1.0;
    double dist = 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
    if (dist < 0.0) dist = 0.0;
    if (dist > 2.0) dist = 2.0;
    return dist;
}

std::vector<double> oracle_heatmap(const FeatureGrid& q, const FeatureGrid& r, long k) {
    std::vector<double> h(q.m * q.n, 0.0);
    for (long i = 0; i < static_cast<long>(q.m); ++i) {
        for (long j = 0; j < static_cast<long>(q.n); ++j) {
            double best = 1e300;
            for (long ii = 0; ii < static_cast<long>(q.m); ++ii) {
                for (long jj = 0; jj < static_cast<long>(q.n); ++jj) {
                    if (std::labs(ii - i) > k || std::labs(jj - j) > k) continue;
                    best = std::min(best, oracle_cosine_dist(q.at(static_cast<std::size_t>(i),
                                                                  static_cast<std::size_t>(j)),
                                                             r.at(static_cast<std::size_t>(ii),
                                                                  static_cast<std::size_t>(jj)),
                                                             q.d));
                }
            }
            h[static_cast<std::size_t>(i) * q.n + static_cast<std::size_t>(j)] = best;
        }
    }
    return h;
}

FeatureGrid random_grid(std::size_t m, std::size_t n, std::size_t d, Rng& rng) {
    FeatureGrid g = make_feature_grid(0, m, n, d);
    for (double& x : g.values) x = 2.0 * uniform01(rng) - 1.0;
    return g;
}

} // namespace

TEST_CASE("cosine distance endpoint cases") {
    const std::vector<double> a = {1.0, 2.0, -0.5};
    CHECK(cosine_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_distance({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));
    CHECK(cosine_distance({1.0, 2.0}, {-1.0, -2.0}) == doctest::Approx(2.0));
    CHECK(cosine_distance({0.0, 0.0}, {1.0, 1.0}) == 1.0);
    CHECK(cosine_distance({0.0, 0.0}, {0.0, 0.0}) == 0.0);
    CHECK_THROWS_AS(cosine_distance({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("identical grids give an all-zero heatmap") {
    Rng rng = make_rng(55);
    const FeatureGrid g = random_grid(6, 7, 4, rng);
    for (std::size_t k : {0u, 1u, 3u}) {
        const Heatmap h = layer_heatmap(g, g, k);
        for (double x : h.values) CHECK(std::abs(x) < 1e-12);
    }
}

TEST_CASE("layer heatmap equals the exhaustive window-search oracle") {
    Rng rng = make_rng(66);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t m = 2 + rand_below(rng, 9);
        const std::size_t n = 2 + rand_below(rng, 9);
        const std::size_t d = 1 + rand_below(rng, 8);
        const std::size_t k = rand_below(rng, 3);
        const FeatureGrid q = random_grid(m, n, d, rng);
        const FeatureGrid r = random_grid(m, n, d, rng);
        const Heatmap h = layer_heatmap(q, r, k);
        const std::vector<double> expect = oracle_heatmap(q, r, static_cast<long>(k));
        REQUIRE(h.values.size() == expect.size());
        for (std::size_t p = 0; p < expect.size(); ++p) CHECK(h.values[p] == expect[p]);
        for (double x : h.values) {
            CHECK(x >= 0.0);
            CHECK(x <= 2.0);
        }
    }
}

TEST_CASE("a query vector present in its window pins the heat to zero") {
    Rng rng = make_rng(59);
    for (int trial = 0; trial < 20; ++trial) {
        FeatureGrid q = random_grid(7, 7, 5, rng);
        FeatureGrid r = random_grid(7, 7, 5, rng);
        const std::size_t k = 1 + rand_below(rng, 2);
        // copy some query vectors into random in-window reference positions
        for (int plant = 0; plant < 5; ++plant) {
            const std::size_t i = rand_below(rng, q.m);
            const std::size_t j = rand_below(rng, q.n);
            const std::size_t ii =
                std::min(q.m - 1, i + rand_below(rng, k + 1));
            const std::size_t jj = j >= k ? j - rand_below(rng, k + 1) : j;
            std::copy(q.at(i, j), q.at(i, j) + q.d, r.at(ii, jj));
            const Heatmap h = layer_heatmap(q, r, k);
            CHECK(h.at(i, j) <= 1e-12);
        }
    }
}

TEST_CASE("enlarging the window never increases any heatmap value") {
    Rng rng = make_rng(77);
    const FeatureGrid q = random_grid(8, 8, 4, rng);
    const FeatureGrid r = random_grid(8, 8, 4, rng);
    Heatmap prev = layer_heatmap(q, r, 0);
    for (std::size_t k = 1; k <= 4; ++k) {
        const Heatmap cur = layer_heatmap(q, r, k);
        for (std::size_t p = 0; p < cur.values.size(); ++p) CHECK(cur.values[p] <= prev.values[p]);
        prev = cur;
    }
}

TEST_CASE("layer heatmap rejects mismatched shapes") {
    Rng rng = make_rng(5);
    const FeatureGrid a = random_grid(4, 4, 3, rng);
    const FeatureGrid b = random_grid(4, 5, 3, rng);
    CHECK_THROWS_AS(layer_heatmap(a, b, 1), std::invalid_argument);
}

TEST_CASE("aggregate is the elementwise mean and is permutation invariant") {
    Heatmap a;
    a.m = a.n = 2;
    a.values = {0.0, 0.0, 0.0, 0.0};
    Heatmap b = a;
    b.values = {1.0, 1.0, 1.0, 1.0};

    const Heatmap single = aggregate({a});
    CHECK(single.values == a.values);
    CHECK(single.source == Heatmap::Source::aggregated);

    const Heatmap mean = aggregate({a, b});
    for (double x : mean.values) CHECK(x == doctest::Approx(0.5));

    Rng rng = make_rng(88);
    std::vector<Heatmap> maps(3, a);
    for (Heatmap& h : maps)
        for (double& x : h.values) x = 2.0 * uniform01(rng);
    const Heatmap m1 = aggregate(maps);
    std::swap(maps[0], maps[2]);
    const Heatmap m2 = aggregate(maps);
    for (std::size_t p = 0; p < m1.values.size(); ++p)
        CHECK(m1.values[p] == doctest::Approx(m2.values[p]).epsilon(1e-15));
    for (std::size_t p = 0; p < m1.values.size(); ++p) {
        const double direct = (maps[0].values[p] + maps[1].values[p] + maps[2].values[p]) / 3.0;
        CHECK(m1.values[p] == doctest::Approx(direct).epsilon(1e-15));
    }

    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("synthetic fixtures: no defect and no shift give zeros") {
    SynthSpec spec;
    spec.m = 10;
    spec.n = 12;
    spec.d = 6;
    spec.layers = 2;
    Rng rng = make_rng(99);
    for (const SynthPair& p : synth_features(spec, rng)) {
        const Heatmap h = layer_heatmap(p.query, p.reference, 1);
        for (double x : h.values) CHECK(std::abs(x) < 1e-12);
    }
}

TEST_CASE("synthetic fixtures: planted defect dominates the aggregated map") {
    std::size_t hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng = make_rng(derive_seed(4242, seed));
        SynthSpec spec;
        spec.m = 12;
        spec.n = 12;
        spec.d = 8;
        spec.layers = 3;
        DefectRect rect;
        rect.h = 2;
        rect.w = 3;
        rect.i0 = rand_below(rng, spec.m - rect.h);
        rect.j0 = rand_below(rng, spec.n - rect.w);
        spec.defect = rect;

        std::vector<Heatmap> maps;
        for (const SynthPair& p : synth_features(spec, rng))
            maps.push_back(layer_heatmap(p.query, p.reference, 1));
        const Heatmap agg = aggregate(maps);

        std::size_t bi = 0, bj = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < agg.m; ++i)
            for (std::size_t j = 0; j < agg.n; ++j)
                if (agg.at(i, j) > best) {
                    best = agg.at(i, j);
                    bi = i;
                    bj = j;
                }
        if (rect.contains(bi, bj)) ++hits;
    }
    CHECK(hits == 100);
}

TEST_CASE("a window of radius k absorbs translations up to k") {
    SynthSpec spec;
    spec.m = 9;
    spec.n = 9;
    spec.d = 4;
    spec.layers = 1;
    spec.shift_i = 1;
    spec.shift_j = 0;
    Rng rng = make_rng(123);
    auto pairs = synth_features(spec, rng);
    // piecewise-constant field: 3x3 blocks of identical vectors
    FeatureGrid& ref = pairs[0].reference;
    for (std::size_t i = 0; i < spec.m; ++i)
        for (std::size_t j = 0; j < spec.n; ++j)
            std::copy(ref.at((i / 3) * 3, (j / 3) * 3), ref.at((i / 3) * 3, (j / 3) * 3) + spec.d,
                      ref.at(i, j));
    FeatureGrid query = make_feature_grid(0, spec.m, spec.n, spec.d);
    for (std::size_t i = 0; i < spec.m; ++i)
        for (std::size_t j = 0; j < spec.n; ++j) {
            const std::size_t si = i == 0 ? 0 : i - 1;
            std::copy(ref.at(si, j), ref.at(si, j) + spec.d, query.at(i, j));
        }

    for (std::size_t k : {1u, 2u}) {
        const Heatmap h = layer_heatmap(query, ref, k);
        for (double x : h.values) CHECK(std::abs(x) < 1e-12);
    }
    // radius 0 cannot absorb the shift: block boundaries mismatch
    const Heatmap h0 = layer_heatmap(query, ref, 0);
    const double mx = *std::max_element(h0.values.begin(), h0.values.end());
    CHECK(mx > 1e-6);
}

TEST_CASE("feature grid json round-trip and heatmap exports") {
    Rng rng = make_rng(321);
    const FeatureGrid g = random_grid(3, 4, 2, rng);
    const std::string dir = testutil::tmp_dir("heatmap_io");
    save_feature_grid(g, dir + "/grid.json");
    const FeatureGrid back = load_feature_grid(dir + "/grid.json");
    CHECK(back.m == g.m);
    CHECK(back.n == g.n);
    CHECK(back.d == g.d);
    CHECK(back.layer == g.layer);
    CHECK(back.values == g.values);  // exact via shortest round-trip decimals

    Heatmap h;
    h.m = 2;
    h.n = 3;
    h.values = {0.0, 0.5, 1.0, 1.5, 2.0, 0.25};
    heatmap_to_csv(h, dir + "/h.csv");
    heatmap_to_pgm(h, dir + "/h.pgm");
    CHECK(testutil::slurp(dir + "/h.csv") == "0.0,0.5,1.0\n1.5,2.0,0.25\n");
    CHECK(testutil::slurp(dir + "/h.pgm") == "P2\n3 2\n255\n0 64 128\n191 255 32\n");
}

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grpolab/rng.hpp"

namespace grpolab {

// Patch-wise feature grid for one layer: m x n spatial positions, d channels.
struct FeatureGrid {
    int layer = 0;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> values;  // [i][j][c], row-major

    const double* at(std::size_t i, std::size_t j) const { return values.data() + (i * n + j) * d; }
    double* at(std::size_t i, std::size_t j) { return values.data() + (i * n + j) * d; }
    bool same_shape(const FeatureGrid& o) const { return m == o.m && n == o.n && d == o.d; }
};

FeatureGrid make_feature_grid(int layer, std::size_t m, std::size_t n, std::size_t d);

struct Heatmap {
    enum class Source { single_layer, aggregated };
    Source source = Source::single_layer;
    int layer = 0;  // meaningful for single_layer maps
    std::size_t m = 0;
    std::size_t n = 0;
    std::vector<double> values;  // [i][j], each in [0, 2]

    double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

// 1 - cos(u, v), clamped to [0, 2]. A zero vector is maximally uninformative
// against a nonzero one (distance 1) and identical to another zero vector
// (distance 0).
double cosine_distance(const double* u, const double* v, std::size_t d);
double cosine_distance(const std::vector<double>& u, const std::vector<double>& v);

// H[i,j] = min over reference positions (i', j') with |i'-i| <= k and
// |j'-j| <= k (clipped at the borders) of the cosine distance between the
// query patch (i, j) and the reference patch (i', j').
Heatmap layer_heatmap(const FeatureGrid& query, const FeatureGrid& reference, std::size_t k);

// Elementwise mean across layer heatmaps.
Heatmap aggregate(const std::vector<Heatmap>& maps);

struct DefectRect {
    std::size_t i0 = 0;
    std::size_t j0 = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    bool contains(std::size_t i, std::size_t j) const {
        return i >= i0 && i < i0 + h && j >= j0 && j < j0 + w;
    }
};

struct SynthSpec {
    std::size_t m = 16;
    std::size_t n = 16;
    std::size_t d = 8;
    std::size_t layers = 3;
    std::optional<DefectRect> defect;
    int shift_i = 0;  // query = reference translated by (shift_i, shift_j)
    int shift_j = 0;
};

struct SynthPair {
    FeatureGrid reference;
    FeatureGrid query;
};

// Reference grids of smoothly varying unit feature vectors; the query is the
// reference translated with border replication, with defect patches replaced
// by vectors orthogonalized against the local reference window.
std::vector<SynthPair> synth_features(const SynthSpec& spec, Rng& rng);

// JSON file: header fields m, n, d, layer plus the row-major value list.
void save_feature_grid(const FeatureGrid& grid, const std::string& path);
FeatureGrid load_feature_grid(const std::string& path);

// CSV matrix (one row per grid row) and plain-text portable graymap with the
// [0, 2] range mapped onto 0..255.
void heatmap_to_csv(const Heatmap& h, const std::string& path);
void heatmap_to_pgm(const Heatmap& h, const std::string& path);

} // namespace grpolab

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grpolab/heatmap.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

enum class ProjectorMode { train, eval };

struct BatchNormParams {
    std::vector<double> gamma;         // per-channel scale
    std::vector<double> shift;         // per-channel shift
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double epsilon = 1e-5;
    double momentum = 0.1;
};

struct ConvParams {
    std::size_t c_out = 32;
    std::size_t c_in = 1;
    std::size_t kh = 3;
    std::size_t kw = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;
    std::vector<double> weights;  // [c_out][c_in][kh][kw]
    std::vector<double> bias;     // [c_out]

    double weight(std::size_t co, std::size_t ci, std::size_t ki, std::size_t kj) const {
        return weights[((co * c_in + ci) * kh + ki) * kw + kj];
    }
};

// Batch normalization -> 2-D convolution -> row-major flatten.
struct ProjectorParams {
    BatchNormParams bn;
    ConvParams conv;
    ProjectorMode mode = ProjectorMode::eval;
};

// Small random conv weights, identity-ish batch norm.
ProjectorParams make_projector(std::size_t c_in, std::size_t c_out, std::size_t kernel,
                               std::size_t stride, std::size_t padding, Rng& rng);

struct ImageBatch {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<double> values;  // [n][c][i][j]

    double at(std::size_t b, std::size_t ch, std::size_t i, std::size_t j) const {
        return values[((b * c + ch) * h + i) * w + j];
    }
    double& at(std::size_t b, std::size_t ch, std::size_t i, std::size_t j) {
        return values[((b * c + ch) * h + i) * w + j];
    }
};

ImageBatch make_image_batch(std::size_t n, std::size_t c, std::size_t h, std::size_t w);

// Single-channel batch from aggregated heatmaps of equal shape.
ImageBatch heatmaps_to_batch(const std::vector<Heatmap>& maps);

// One embedding per output spatial position, flattened row-major.
struct EmbeddingSequence {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t dim = 0;           // == conv c_out
    std::vector<double> values;    // [position][dim]

    std::size_t length() const { return rows * cols; }
    const double* embedding(std::size_t pos) const { return values.data() + pos * dim; }
};

// Normalizes per channel (train: batch statistics with running-stat update;
// eval: running statistics), convolves, flattens. Train mode needs a batch of
// at least 2; batch variance is the population variance.
std::vector<EmbeddingSequence> project(const ImageBatch& batch, ProjectorParams& params);

// Learnable prompt-embedding slot count carried as experiment metadata; slot
// contents only exist inside a host language model, so nothing is trained
// here.
struct SoftPromptSpec {
    std::size_t slots = 8;
    std::string init_hint = "Below are some hints for your reference:";
};

} // namespace grpolab

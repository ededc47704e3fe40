#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "grpolab/projector.hpp"

using namespace grpolab;

namespace {

ImageBatch random_batch(std::size_t n, std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
    ImageBatch b = make_image_batch(n, c, h, w);
    for (double& x : b.values) x = 4.0 * uniform01(rng) - 1.0;
    return b;
}

} // namespace

TEST_CASE("projector output shape follows convolution arithmetic") {
    Rng rng = make_rng(1);
    struct Case {
        std::size_t h, w, c_in, c_out, k, stride, pad;
    };
    const Case cases[] = {
        {16, 16, 1, 32, 3, 1, 1}, {16, 16, 1, 8, 3, 2, 1},  {10, 12, 1, 4, 5, 1, 2},
        {8, 8, 2, 16, 3, 1, 0},   {9, 7, 1, 6, 1, 1, 0},    {12, 12, 3, 5, 3, 3, 1},
        {6, 6, 1, 2, 5, 1, 4},    {20, 10, 1, 7, 7, 2, 3},  {5, 5, 2, 3, 3, 1, 1},
        {14, 6, 1, 12, 3, 2, 0},
    };
    for (const Case& c : cases) {
        ProjectorParams p = make_projector(c.c_in, c.c_out, c.k, c.stride, c.pad, rng);
        p.mode = ProjectorMode::eval;
        const ImageBatch batch = random_batch(2, c.c_in, c.h, c.w, rng);
        const auto seqs = project(batch, p);
        REQUIRE(seqs.size() == 2);
        const std::size_t oh = (c.h + 2 * c.pad - c.k) / c.stride + 1;
        const std::size_t ow = (c.w + 2 * c.pad - c.k) / c.stride + 1;
        CHECK(seqs[0].rows == oh);
        CHECK(seqs[0].cols == ow);
        CHECK(seqs[0].length() == oh * ow);
        CHECK(seqs[0].dim == c.c_out);
        CHECK(seqs[0].values.size() == oh * ow * c.c_out);
    }
}

TEST_CASE("16x16 single-channel default projector yields 256 embeddings of dim 32") {
    Rng rng = make_rng(2);
    ProjectorParams p = make_projector(1, 32, 3, 1, 1, rng);
    const ImageBatch batch = random_batch(3, 1, 16, 16, rng);
    const auto seqs = project(batch, p);
    for (const EmbeddingSequence& s : seqs) {
        CHECK(s.length() == 256);
        CHECK(s.dim == 32);
    }
}

TEST_CASE("train mode normalizes each channel to mean 0 variance 1") {
    Rng rng = make_rng(3);
    // identity conv so the embeddings expose the normalized values directly
    ProjectorParams p = make_projector(2, 2, 1, 1, 0, rng);
    p.conv.weights = {1.0, 0.0, 0.0, 1.0};  // 2x2x1x1 identity
    p.conv.bias = {0.0, 0.0};
    p.mode = ProjectorMode::train;
    p.bn.epsilon = 1e-12;

    ImageBatch batch = random_batch(4, 2, 6, 5, rng);
    for (std::size_t i = 0; i < batch.values.size() / 2; ++i) batch.values[i] *= 3.7;  // skew ch 0
    const auto seqs = project(batch, p);

    for (std::size_t ch = 0; ch < 2; ++ch) {
        double mean = 0.0;
        std::size_t count = 0;
        for (const EmbeddingSequence& s : seqs)
            for (std::size_t pos = 0; pos < s.length(); ++pos) {
                mean += s.embedding(pos)[ch];
                ++count;
            }
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (const EmbeddingSequence& s : seqs)
            for (std::size_t pos = 0; pos < s.length(); ++pos) {
                const double x = s.embedding(pos)[ch] - mean;
                var += x * x;
            }
        var /= static_cast<double>(count);
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("running statistics update with momentum in train mode only") {
    Rng rng = make_rng(4);
    ProjectorParams p = make_projector(1, 1, 1, 1, 0, rng);
    p.bn.momentum = 0.25;
    const ImageBatch batch = random_batch(2, 1, 3, 3, rng);

    double mean = 0.0;
    for (double x : batch.values) mean += x;
    mean /= static_cast<double>(batch.values.size());
    double var = 0.0;
    for (double x : batch.values) var += (x - mean) * (x - mean);
    var /= static_cast<double>(batch.values.size());

    p.mode = ProjectorMode::train;
    project(batch, p);
    CHECK(p.bn.running_mean[0] == doctest::Approx(0.25 * mean).epsilon(1e-12));
    CHECK(p.bn.running_var[0] == doctest::Approx(0.75 + 0.25 * var).epsilon(1e-12));

    const double rm = p.bn.running_mean[0], rv = p.bn.running_var[0];
    p.mode = ProjectorMode::eval;
    project(batch, p);
    CHECK(p.bn.running_mean[0] == rm);
    CHECK(p.bn.running_var[0] == rv);
}

TEST_CASE("identity configuration reproduces the flattened input in eval mode") {
    Rng rng = make_rng(5);
    ProjectorParams p = make_projector(1, 1, 1, 1, 0, rng);
    p.conv.weights = {1.0};
    p.conv.bias = {0.0};
    p.mode = ProjectorMode::eval;  // running stats stay (0, 1)
    p.bn.epsilon = 0.0;

    Heatmap h;
    h.m = 3;
    h.n = 4;
    h.values = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2};
    const auto seqs = project(heatmaps_to_batch({h, h}), p);
    REQUIRE(seqs.size() == 2);
    for (const EmbeddingSequence& s : seqs) {
        REQUIRE(s.length() == 12);
        for (std::size_t pos = 0; pos < 12; ++pos)
            CHECK(s.embedding(pos)[0] == doctest::Approx(h.values[pos]).epsilon(1e-12));
    }
}

TEST_CASE("train mode rejects a batch of one; shape errors reported") {
    Rng rng = make_rng(6);
    ProjectorParams p = make_projector(1, 4, 3, 1, 1, rng);
    p.mode = ProjectorMode::train;
    const ImageBatch single = random_batch(1, 1, 8, 8, rng);
    CHECK_THROWS_AS(project(single, p), std::invalid_argument);

    p.mode = ProjectorMode::eval;
    const ImageBatch wrong_channels = random_batch(2, 3, 8, 8, rng);
    CHECK_THROWS_AS(project(wrong_channels, p), std::invalid_argument);

    ProjectorParams big = make_projector(1, 2, 9, 1, 0, rng);
    big.mode = ProjectorMode::eval;
    const ImageBatch small = random_batch(2, 1, 4, 4, rng);
    CHECK_THROWS_AS(project(small, big), std::invalid_argument);
}

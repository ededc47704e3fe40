#include "grpolab/projector.hpp"

#include <cmath>
#include <stdexcept>

namespace grpolab {

ProjectorParams make_projector(std::size_t c_in, std::size_t c_out, std::size_t kernel,
                               std::size_t stride, std::size_t padding, Rng& rng) {
    if (c_in == 0 || c_out == 0 || kernel == 0 || stride == 0)
        throw std::invalid_argument("make_projector: degenerate configuration");
    ProjectorParams p;
    p.bn.gamma.assign(c_in, 1.0);
    p.bn.shift.assign(c_in, 0.0);
    p.bn.running_mean.assign(c_in, 0.0);
    p.bn.running_var.assign(c_in, 1.0);
    p.conv.c_in = c_in;
    p.conv.c_out = c_out;
    p.conv.kh = kernel;
    p.conv.kw = kernel;
    p.conv.stride = stride;
    p.conv.padding = padding;
    const std::size_t fan_in = c_in * kernel * kernel;
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    p.conv.weights.resize(c_out * fan_in);
    for (double& w : p.conv.weights) w = scale * (2.0 * uniform01(rng) - 1.0);
    p.conv.bias.assign(c_out, 0.0);
    return p;
}

ImageBatch make_image_batch(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    ImageBatch b;
    b.n = n;
    b.c = c;
    b.h = h;
    b.w = w;
    b.values.assign(n * c * h * w, 0.0);
    return b;
}

ImageBatch heatmaps_to_batch(const std::vector<Heatmap>& maps) {
    if (maps.empty()) throw std::invalid_argument("heatmaps_to_batch: empty batch");
    ImageBatch b = make_image_batch(maps.size(), 1, maps.front().m, maps.front().n);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (maps[i].m != b.h || maps[i].n != b.w)
            throw std::invalid_argument("heatmaps_to_batch: heatmap shapes differ");
        std::copy(maps[i].values.begin(), maps[i].values.end(),
                  b.values.begin() + static_cast<std::ptrdiff_t>(i * b.h * b.w));
    }
    return b;
}

std::vector<EmbeddingSequence> project(const ImageBatch& batch, ProjectorParams& params) {
    if (batch.n == 0) throw std::invalid_argument("project: empty batch");
    if (batch.c != params.conv.c_in)
        throw std::invalid_argument("project: channel count does not match conv c_in");
    if (params.bn.gamma.size() != batch.c || params.bn.shift.size() != batch.c ||
        params.bn.running_mean.size() != batch.c || params.bn.running_var.size() != batch.c)
        throw std::invalid_argument("project: batch-norm parameter size mismatch");
    if (params.mode == ProjectorMode::train && batch.n < 2)
        throw std::invalid_argument("project: train mode needs batch size >= 2");
    const std::size_t hw = batch.h * batch.w;

    // batch normalization
    ImageBatch normed = batch;
    for (std::size_t ch = 0; ch < batch.c; ++ch) {
        double mean, var;
        if (params.mode == ProjectorMode::train) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch.n; ++b)
                for (std::size_t p = 0; p < hw; ++p)
                    s += batch.values[(b * batch.c + ch) * hw + p];
            mean = s / static_cast<double>(batch.n * hw);
            double v = 0.0;
            for (std::size_t b = 0; b < batch.n; ++b)
                for (std::size_t p = 0; p < hw; ++p) {
                    const double x = batch.values[(b * batch.c + ch) * hw + p] - mean;
                    v += x * x;
                }
            var = v / static_cast<double>(batch.n * hw);
            params.bn.running_mean[ch] =
                (1.0 - params.bn.momentum) * params.bn.running_mean[ch] + params.bn.momentum * mean;
            params.bn.running_var[ch] =
                (1.0 - params.bn.momentum) * params.bn.running_var[ch] + params.bn.momentum * var;
        } else {
            mean = params.bn.running_mean[ch];
            var = params.bn.running_var[ch];
        }
        const double inv_sd = 1.0 / std::sqrt(var + params.bn.epsilon);
        for (std::size_t b = 0; b < batch.n; ++b)
            for (std::size_t p = 0; p < hw; ++p) {
                double& x = normed.values[(b * batch.c + ch) * hw + p];
                x = (x - mean) * inv_sd * params.bn.gamma[ch] + params.bn.shift[ch];
            }
    }

    // convolution
    const ConvParams& cv = params.conv;
    if (batch.h + 2 * cv.padding < cv.kh || batch.w + 2 * cv.padding < cv.kw)
        throw std::invalid_argument("project: kernel larger than padded input");
    const std::size_t oh = (batch.h + 2 * cv.padding - cv.kh) / cv.stride + 1;
    const std::size_t ow = (batch.w + 2 * cv.padding - cv.kw) / cv.stride + 1;

    std::vector<EmbeddingSequence> out(batch.n);
    for (std::size_t b = 0; b < batch.n; ++b) {
        EmbeddingSequence& seq = out[b];
        seq.rows = oh;
        seq.cols = ow;
        seq.dim = cv.c_out;
        seq.values.assign(oh * ow * cv.c_out, 0.0);
        for (std::size_t oi = 0; oi < oh; ++oi) {
            for (std::size_t oj = 0; oj < ow; ++oj) {
                const std::size_t pos = oi * ow + oj;
                for (std::size_t co = 0; co < cv.c_out; ++co) {
                    double acc = cv.bias[co];
                    for (std::size_t ci = 0; ci < cv.c_in; ++ci) {
                        for (std::size_t ki = 0; ki < cv.kh; ++ki) {
                            const std::ptrdiff_t ii =
                                static_cast<std::ptrdiff_t>(oi * cv.stride + ki) -
                                static_cast<std::ptrdiff_t>(cv.padding);
                            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(batch.h)) continue;
                            for (std::size_t kj = 0; kj < cv.kw; ++kj) {
                                const std::ptrdiff_t jj =
                                    static_cast<std::ptrdiff_t>(oj * cv.stride + kj) -
                                    static_cast<std::ptrdiff_t>(cv.padding);
                                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(batch.w)) continue;
                                acc += cv.weight(co, ci, ki, kj) *
                                       normed.at(b, ci, static_cast<std::size_t>(ii),
                                                 static_cast<std::size_t>(jj));
                            }
                        }
                    }
                    seq.values[pos * cv.c_out + co] = acc;
                }
            }
        }
    }
    return out;
}

} // namespace grpolab

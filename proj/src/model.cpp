#include "pinnlab/model.hpp"

#include <cmath>
#include <stdexcept>

#include "pinnlab/rng.hpp"

namespace pinnlab {

MlpParams::MlpParams(int depth, int width) : depth_(depth), width_(width) {
    if (depth < 1 || width < 1) {
        throw std::invalid_argument("mlp: depth and width must be positive");
    }
    std::size_t offset = 0;
    int in = 2;
    for (int l = 0; l <= depth; ++l) {
        const int out = l == depth ? 1 : width;
        LayerShape shape;
        shape.in = in;
        shape.out = out;
        shape.weight_offset = offset;
        offset += std::size_t(in) * std::size_t(out);
        shape.bias_offset = offset;
        offset += std::size_t(out);
        layers_.push_back(shape);
        in = out;
    }
    flat_.assign(offset, 0.0);
}

void MlpParams::assign(std::span<const double> values) {
    if (values.size() != flat_.size()) {
        throw std::invalid_argument("mlp: parameter vector length mismatch");
    }
    std::copy(values.begin(), values.end(), flat_.begin());
}

std::size_t parameter_count(int depth, int width) {
    const auto w = std::size_t(width);
    return (2 * w + w) + (w * w + w) * std::size_t(depth - 1) + (w + 1);
}

MlpParams init_mlp(std::uint64_t seed, int depth, int width, PrecisionSpec precision) {
    MlpParams params(depth, width);
    Rng rng(seed);
    auto flat = params.flat();
    for (const auto& layer : params.layers()) {
        const double bound = std::sqrt(6.0 / double(layer.in + layer.out));
        const std::size_t n = std::size_t(layer.in) * std::size_t(layer.out);
        for (std::size_t k = 0; k < n; ++k) {
            flat[layer.weight_offset + k] = round_to(precision, rng.uniform(-bound, bound));
        }
    }
    return params;
}

double forward(const MlpParams& params, double x, double t, PrecisionSpec precision) {
    const auto r = [&](double v) { return round_to(precision, v); };
    std::vector<double> act{r(x), r(t)};
    std::vector<double> next;
    const auto layers = params.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& shape = layers[l];
        next.assign(std::size_t(shape.out), 0.0);
        for (int i = 0; i < shape.out; ++i) {
            double acc = 0.0;
            for (int j = 0; j < shape.in; ++j) {
                acc = r(acc + r(params.weight(l, i, j) * act[std::size_t(j)]));
            }
            acc = r(acc + params.bias(l, i));
            next[std::size_t(i)] = l + 1 < layers.size() ? r(std::tanh(acc)) : acc;
        }
        act.swap(next);
    }
    return act[0];
}

ad::Var forward(const MlpParams& params, ad::Tape& tape, ad::Var x, ad::Var t, std::span<const ad::Var> theta) {
    if (theta.size() != params.size()) {
        throw std::invalid_argument("mlp: theta length does not match the parameter shape");
    }
    std::vector<ad::Var> act{x, t};
    std::vector<ad::Var> next;
    const auto layers = params.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& shape = layers[l];
        next.clear();
        for (int i = 0; i < shape.out; ++i) {
            ad::Var acc = tape.constant(0.0);
            for (int j = 0; j < shape.in; ++j) {
                acc = acc + theta[shape.weight_offset + std::size_t(i) * std::size_t(shape.in) + std::size_t(j)] *
                                act[std::size_t(j)];
            }
            acc = acc + theta[shape.bias_offset + std::size_t(i)];
            next.push_back(l + 1 < layers.size() ? tanh(acc) : acc);
        }
        act.swap(next);
    }
    return act[0];
}

}  // namespace pinnlab

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pinnlab/autodiff.hpp"
#include "pinnlab/precision.hpp"

namespace pinnlab {

struct Point {
    double x = 0.0;
    double t = 0.0;
};

struct LayerShape {
    int in = 0;
    int out = 0;
    std::size_t weight_offset = 0;  ///< out x in, row-major
    std::size_t bias_offset = 0;
};

/// Parameters of the tanh MLP u(x, t). `depth` counts hidden layers; the
/// input layer takes (x, t) and the output layer is linear with one unit.
/// The flat vector is layer-major, each layer weights (row-major) then bias.
class MlpParams {
public:
    MlpParams() = default;
    MlpParams(int depth, int width);

    int depth() const { return depth_; }
    int width() const { return width_; }
    std::span<const LayerShape> layers() const { return layers_; }

    std::size_t size() const { return flat_.size(); }
    std::span<double> flat() { return flat_; }
    std::span<const double> flat() const { return flat_; }
    void assign(std::span<const double> values);

    double weight(std::size_t layer, int row, int col) const {
        const auto& l = layers_[layer];
        return flat_[l.weight_offset + std::size_t(row) * std::size_t(l.in) + std::size_t(col)];
    }
    double bias(std::size_t layer, int row) const { return flat_[layers_[layer].bias_offset + std::size_t(row)]; }

    bool same_shape(const MlpParams& other) const { return depth_ == other.depth_ && width_ == other.width_; }

private:
    int depth_ = 0;
    int width_ = 0;
    std::vector<LayerShape> layers_;
    std::vector<double> flat_;
};

std::size_t parameter_count(int depth, int width);

/// Xavier/Glorot-uniform weights, zero biases, drawn in flat order from
/// Rng(seed) and rounded into `precision`.
MlpParams init_mlp(std::uint64_t seed, int depth, int width, PrecisionSpec precision = kFp64);

/// Scalar evaluation with round-after-op arithmetic.
double forward(const MlpParams& params, double x, double t, PrecisionSpec precision = kFp64);

/// Records the network on a tape. `theta` holds one tape variable per flat
/// parameter; `params` supplies only the shape.
ad::Var forward(const MlpParams& params, ad::Tape& tape, ad::Var x, ad::Var t, std::span<const ad::Var> theta);

}  // namespace pinnlab

#pragma once

// Loss and error probes along parameter-space segments and planes. All
// evaluation is FP64 whatever precision the probed model was trained in.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pinnlab/loss.hpp"
#include "pinnlab/model.hpp"
#include "pinnlab/pde.hpp"

namespace pinnlab {

enum class SliceKind { segment, plane };

struct LandscapeSlice {
    SliceKind kind = SliceKind::segment;
    std::vector<double> alphas;
    std::vector<double> betas;  ///< plane only
    /// Segment: one entry per alpha. Plane: alpha-major, beta fastest.
    std::vector<double> loss;
    std::vector<double> rmae;
    std::vector<std::vector<double>> directions;  ///< plane only
};

struct LandscapeProbe {
    const PdeProblem& problem;
    const CollocationSet& colloc;
    const ReferenceSet& reference;
    LossWeights weights{};
    int threads = 1;  ///< grid points are independent
};

/// theta(a) = (1 - a) theta_a + a theta_b on a uniform grid over [0, 1].
/// Endpoints reproduce the anchors bit-exactly.
LandscapeSlice interpolate_segment(const MlpParams& theta_a, const MlpParams& theta_b, int n_points,
                                   const LandscapeProbe& probe);

/// Two seeded random directions, layer-wise rescaled so each layer block has
/// the norm of the matching block of `center`; the second is made orthogonal
/// to the first and rescaled to the first's norm.
std::vector<std::vector<double>> plane_directions(const MlpParams& center, std::uint64_t seed);

/// Loss and rMAE on the n x n grid center + a d1 + b d2, (a, b) in
/// [-extent, extent]^2.
LandscapeSlice slice_2d(const MlpParams& center, std::uint64_t seed, double extent, int n,
                        const LandscapeProbe& probe);

/// max over interior points of loss minus max(loss at ends), clipped at 0.
double barrier_height(std::span<const double> segment_loss);
double barrier_height(const LandscapeSlice& slice);

/// `alpha,loss,rmae` for segments, `alpha,beta,loss,rmae` for planes.
void write_slice_csv(const LandscapeSlice& slice, const std::string& path);

}  // namespace pinnlab

#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pinnlab/model.hpp"
#include "pinnlab/pde.hpp"
#include "pinnlab/precision.hpp"

namespace pinnlab {

struct LossBreakdown {
    double total = 0.0;
    double l_f = 0.0;  ///< mean squared interior residual
    double l_b = 0.0;  ///< mean squared boundary/initial violation
    double lambda_f = 1.0;
    double lambda_b = 1.0;
};

struct LossEvaluation {
    LossBreakdown breakdown;
    std::vector<double> grad;  ///< empty when not requested
};

struct LossWeights {
    double lambda_f = 1.0;
    double lambda_b = 1.0;
};

/// lambda_f * mean(F^2 over interior) + lambda_b * mean(B^2 over boundary),
/// every operation rounded in `precision`. Sums run in collocation order.
/// Throws std::invalid_argument on an empty interior set.
LossEvaluation total_loss(const MlpParams& params, const PdeProblem& problem, const CollocationSet& colloc,
                          LossWeights weights, PrecisionSpec precision, bool with_grad = true);

/// sum|pred - truth| / sum|truth|
double rmae(std::span<const double> pred, std::span<const double> truth);
/// sqrt(sum (pred - truth)^2 / sum truth^2)
double rrmse(std::span<const double> pred, std::span<const double> truth);

/// Dense evaluation grid with the reference solution at each point.
struct ReferenceSet {
    std::vector<Point> points;
    std::vector<double> truth;
};

/// Uniform nx x nt grid over the problem domain including endpoints,
/// t-major. Throws std::invalid_argument when the problem has no reference.
ReferenceSet make_reference_set(const PdeProblem& problem, int nx, int nt);

struct FieldError {
    double rmae = 0.0;
    double rrmse = 0.0;
};

/// Errors of the network's FP64 prediction against `ref`.
FieldError field_error(const MlpParams& params, const ReferenceSet& ref);

enum class Phase { unconverged, failure, success };

std::string_view to_string(Phase phase);
Phase parse_phase(std::string_view name);

struct PhaseThresholds {
    double loss_low = 1e-3;
    double err_low = 0.05;
    double err_high = 0.3;

    void validate() const;
};

/// Loss above loss_low is UnConverged. Below it, rmae >= err_high is Failure
/// and rmae <= err_low is Success; the band in between keeps the previous
/// Failure/Success label and otherwise reads as Failure.
Phase classify_phase(double loss, double rmae_value, const PhaseThresholds& cfg,
                     std::optional<Phase> previous = std::nullopt);

/// Number of adjacent pairs that step backwards in UnConverged -> Failure ->
/// Success order.
int count_phase_regressions(std::span<const Phase> sequence);

}  // namespace pinnlab

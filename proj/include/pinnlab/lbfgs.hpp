#pragma once

// Limited-memory BFGS with a strong-Wolfe line search.
//
// Control is split the way deep-learning frameworks split it: the caller owns
// the outer loop and calls step() repeatedly; each step() runs up to
// max_inner_iter quasi-Newton iterations and returns early when one of the
// convergence tests fires. All vector arithmetic and every convergence
// comparison is rounded in the state's precision, which is what lets a
// narrow format trip tolerance_change long before the objective is solved.

#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "pinnlab/precision.hpp"

namespace pinnlab {

enum class StopReason { max_inner, grad_tolerance, change_tolerance, loss_change_tolerance, line_search_fail };

std::string_view to_string(StopReason reason);
StopReason parse_stop_reason(std::string_view name);

struct LbfgsConfig {
    int max_inner_iter = 20;
    int history_size = 50;
    double tolerance_grad = 1e-9;
    double tolerance_change = 1e-7;
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_search_evals = 25;
    /// Zoom stops once |bracket| * max|d| drops below this.
    double line_search_tolerance = 1e-9;
    double learning_rate = 1.0;
};

struct CurvaturePair {
    std::vector<double> s;
    std::vector<double> y;
    double rho = 0.0;  ///< 1 / (y^T s)
};

class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Line search.
// ---------------------------------------------------------------------------

struct LineSample {
    double value = 0.0;  ///< phi(alpha)
    double slope = 0.0;  ///< phi'(alpha)
};

using LineFunction = std::function<LineSample(double alpha)>;

struct WolfeParams {
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_evals = 25;
    double interval_tolerance = 1e-9;
    double direction_scale = 1.0;  ///< max|d|, scales the interval test
    PrecisionSpec precision = kFp64;
};

struct LineSearchResult {
    double alpha = 0.0;
    double value = 0.0;
    double slope = 0.0;
    int evals = 0;
    bool wolfe = false;               ///< both strong-Wolfe conditions hold at alpha
    bool budget_exhausted = false;    ///< stopped on max_evals
    bool all_non_finite = false;      ///< every trial returned inf/nan
};

/// Bracketing phase followed by zoom with safeguarded cubic interpolation.
/// Returns the lowest trial that keeps sufficient decrease (possibly alpha=0
/// when the interval collapses without progress). Throws
/// std::invalid_argument if phi'(0) >= 0.
LineSearchResult strong_wolfe(const LineFunction& phi, LineSample at_zero, double alpha0, const WolfeParams& params);

/// Minimiser of the cubic through (x1, f1, g1), (x2, f2, g2), clamped to
/// [lo, hi]; midpoint when the cubic has no real minimiser.
double cubic_minimizer(double x1, double f1, double g1, double x2, double f2, double g2, double lo, double hi);

// ---------------------------------------------------------------------------
// Optimizer.
// ---------------------------------------------------------------------------

/// f(x) with gradient written into `grad` (resized by the callee).
using Objective = std::function<double(std::span<const double> x, std::vector<double>& grad)>;

struct AcceptedStep {
    double alpha = 0.0;
    double phi0 = 0.0;
    double dphi0 = 0.0;
    double phi = 0.0;
    double dphi = 0.0;
    bool wolfe = false;
    std::vector<double> x_before;
    std::vector<double> direction;
};

struct StepReport {
    int inner_iters = 0;
    StopReason stop_reason = StopReason::max_inner;
    double loss_before = 0.0;
    double loss_after = 0.0;
    double grad_inf_norm = 0.0;
    int function_evals = 0;
    int pairs_accepted = 0;
    std::vector<AcceptedStep> steps;  ///< steps that moved the iterate, when LbfgsState::record_steps is set
};

class LbfgsState {
public:
    explicit LbfgsState(LbfgsConfig config = {}, PrecisionSpec precision = kFp64);

    const LbfgsConfig& config() const { return config_; }
    const PrecisionSpec& precision() const { return precision_; }
    const std::deque<CurvaturePair>& history() const { return history_; }
    double gamma() const { return gamma_; }

    long outer_steps() const { return outer_steps_; }
    long total_inner_iters() const { return total_inner_iters_; }
    int last_inner_count() const { return last_inner_count_; }
    StopReason stop_reason() const { return stop_reason_; }

    /// Stores (s, y) and refreshes gamma = s^T y / y^T y iff
    /// y^T s > 1e-10 ||s|| ||y||; evicts the oldest pair beyond capacity.
    bool accept_pair(std::span<const double> s, std::span<const double> y);

    /// -H grad with H the implicit inverse Hessian (H0 = gamma I).
    std::vector<double> two_loop_direction(std::span<const double> grad) const;

    /// Forgets curvature pairs, the carried direction and the cached
    /// evaluation (used when resuming under a different precision).
    void reset();

    bool record_steps = false;

private:
    friend StepReport step(LbfgsState& state, const Objective& objective, std::span<double> params);

    LbfgsConfig config_;
    PrecisionSpec precision_;
    std::deque<CurvaturePair> history_;
    double gamma_ = 1.0;

    long outer_steps_ = 0;
    long total_inner_iters_ = 0;
    long iterations_since_reset_ = 0;
    int last_inner_count_ = 0;
    StopReason stop_reason_ = StopReason::max_inner;

    // Carried between outer steps.
    std::vector<double> direction_;
    std::vector<double> prev_grad_;
    double step_size_ = 0.0;

    // Last evaluation, reused when step() is called at the same point.
    std::vector<double> cached_x_;
    std::vector<double> cached_grad_;
    double cached_loss_ = 0.0;
    bool cache_valid_ = false;
};

/// One outer step: up to max_inner_iter inner iterations on `params`.
/// Throws NonFiniteLossError if the objective at the iterate is not finite.
StepReport step(LbfgsState& state, const Objective& objective, std::span<double> params);

struct StallReport {
    double max_update = 0.0;
    double max_param = 0.0;
    bool underflow_stall = false;  ///< max|dtheta| < eps * max(1, max|theta|)
};

StallReport stall_diagnostic(std::span<const double> params, std::span<const double> update,
                             const PrecisionSpec& precision);

}  // namespace pinnlab

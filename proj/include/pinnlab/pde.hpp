#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pinnlab/autodiff.hpp"
#include "pinnlab/jet_kernel.hpp"
#include "pinnlab/model.hpp"

namespace pinnlab {

enum class PdeKind { convection, reaction, wave, allen_cahn };

std::string_view to_string(PdeKind kind);
PdeKind parse_pde(std::string_view name);

struct Domain {
    double x_min = 0.0;
    double x_max = 1.0;
    double t_min = 0.0;
    double t_max = 1.0;
};

/// u and its input derivatives at one point.
template <typename S>
struct Jet {
    S u{}, ux{}, ut{}, uxx{}, utt{};
};

// ---------------------------------------------------------------------------
// Residual operators and closed-form solutions. Templated so that the same
// expression is evaluated on tape variables (differentiable, precision
// rounded) or on plain doubles.
// ---------------------------------------------------------------------------

/// u_t + beta u_x
template <typename S>
S residual_convection(const Jet<S>& j, double beta) {
    return j.ut + beta * j.ux;
}

/// u_t - rho u (1 - u)
template <typename S>
S residual_reaction(const Jet<S>& j, double rho) {
    return j.ut - rho * (j.u * (1.0 - j.u));
}

/// u_tt - 4 u_xx
template <typename S>
S residual_wave(const Jet<S>& j) {
    return j.utt - 4.0 * j.uxx;
}

/// u_t - 1e-4 u_xx + 5 u^3 - 5 u
template <typename S>
S residual_allen_cahn(const Jet<S>& j) {
    using std::pow;
    return j.ut - 0.0001 * j.uxx + 5.0 * pow(j.u, 3) - 5.0 * j.u;
}

template <typename S>
S analytic_convection(S x, S t, double beta) {
    using std::sin;
    return sin(x - beta * t);
}

/// Gaussian bump exp(-(x - pi)^2 / (2 (pi/4)^2)), the reaction initial state.
template <typename S>
S reaction_bump(S x) {
    using std::exp;
    constexpr double sigma = std::numbers::pi / 4.0;
    const S shifted = x - std::numbers::pi;
    return exp(-(shifted * shifted) / (2.0 * sigma * sigma));
}

template <typename S>
S analytic_reaction(S x, S t, double rho) {
    using std::exp;
    const S h = reaction_bump(x);
    const S growth = exp(rho * t);
    return h * growth / (h * (growth - 1.0) + 1.0);
}

/// Standing-wave solution with the 1/2 weight on the second harmonic that
/// the initial condition carries.
template <typename S>
S analytic_wave(S x, S t, double beta) {
    using std::cos;
    using std::sin;
    constexpr double pi = std::numbers::pi;
    return sin(pi * x) * cos(2.0 * pi * t) + 0.5 * (sin(beta * pi * x) * cos(2.0 * beta * pi * t));
}

// ---------------------------------------------------------------------------
// Collocation.
// ---------------------------------------------------------------------------

enum class BoundaryTag { initial_value, initial_velocity, dirichlet, periodic_value, periodic_derivative };

std::string_view to_string(BoundaryTag tag);

struct BoundaryConstraint {
    BoundaryTag tag = BoundaryTag::initial_value;
    Point at;
    Point partner;  ///< second point of a periodic pair; unused otherwise
};

struct CollocationSet {
    int nx = 0;
    int nt = 0;
    std::vector<Point> interior;               ///< t-major, then x
    std::vector<BoundaryConstraint> boundary;  ///< initial set first, then per-t edge terms
};

class AllenCahnReference;

/// One benchmark problem: operators, domain and reference solution.
class PdeProblem {
public:
    /// Defaults: convection beta=50, reaction rho=5, wave beta=3. Unknown
    /// parameter names throw.
    static PdeProblem make(PdeKind kind, const std::map<std::string, double>& overrides = {});

    PdeKind kind() const { return kind_; }
    const Domain& domain() const { return domain_; }
    const std::map<std::string, double>& params() const { return params_; }
    double param(const std::string& name) const;

    /// Derivatives the interior residual and boundary terms need.
    JetComponents interior_components() const;
    JetComponents boundary_components() const;
    std::vector<BoundaryTag> boundary_terms() const;

    template <typename S>
    S residual(const Jet<S>& j) const {
        switch (kind_) {
        case PdeKind::convection: return residual_convection(j, beta_);
        case PdeKind::reaction: return residual_reaction(j, rho_);
        case PdeKind::wave: return residual_wave(j);
        case PdeKind::allen_cahn: return residual_allen_cahn(j);
        }
        return j.u;
    }

    /// Constraint violation. `partner` is read for periodic tags only.
    template <typename S>
    S boundary_violation(const BoundaryConstraint& c, const Jet<S>& at, const Jet<S>& partner) const {
        switch (c.tag) {
        case BoundaryTag::initial_value: return at.u - initial_value(c.at.x);
        case BoundaryTag::initial_velocity: return at.ut;
        case BoundaryTag::dirichlet: return at.u;
        case BoundaryTag::periodic_value: return at.u - partner.u;
        case BoundaryTag::periodic_derivative: return at.ux - partner.ux;
        }
        return at.u;
    }

    double initial_value(double x) const;

    bool has_reference() const;
    /// Analytic solution, or the bundled Allen-Cahn oracle once attached.
    double reference(double x, double t) const;
    void attach_reference(std::shared_ptr<const AllenCahnReference> ref) { ac_reference_ = std::move(ref); }

private:
    PdeKind kind_ = PdeKind::convection;
    Domain domain_;
    std::map<std::string, double> params_;
    double beta_ = 0.0;
    double rho_ = 0.0;
    std::shared_ptr<const AllenCahnReference> ac_reference_;
};

/// Uniform nx x nt tensor grid including endpoints plus the boundary and
/// initial constraints the problem imposes. Corners (t = t_min) belong to the
/// initial set.
CollocationSet make_grid(const PdeProblem& problem, int nx, int nt);

/// Evaluates all boundary violations for a field given as a tape builder.
std::vector<double> boundary_residuals(const PdeProblem& problem, const ad::FieldBuilder& u,
                                       std::span<const double> params, std::span<const BoundaryConstraint> constraints,
                                       PrecisionSpec precision = kFp64);

/// Records u at (x, t) on `tape` and differentiates it for the requested
/// components (nested reverse passes).
Jet<ad::Var> field_jet(ad::Tape& tape, const ad::FieldBuilder& u, double x, double t, std::span<const ad::Var> params,
                       JetComponents comps);

/// Interior residual of `u` at p (FP64 tape unless stated).
double residual_at(const PdeProblem& problem, const ad::FieldBuilder& u, std::span<const double> params, Point p,
                   PrecisionSpec precision = kFp64);

/// FieldBuilder for the problem's closed-form solution (no parameters).
ad::FieldBuilder analytic_field(const PdeProblem& problem);

/// CSV with header `x,t,u`, t-outer.
void write_reference_csv(const PdeProblem& problem, int nx, int nt, const std::string& path);

}  // namespace pinnlab

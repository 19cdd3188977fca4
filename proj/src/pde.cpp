#include "pinnlab/pde.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "pinnlab/allen_cahn.hpp"
#include "pinnlab/csv.hpp"

namespace pinnlab {

std::string_view to_string(PdeKind kind) {
    switch (kind) {
    case PdeKind::convection: return "convection";
    case PdeKind::reaction: return "reaction";
    case PdeKind::wave: return "wave";
    case PdeKind::allen_cahn: return "allen_cahn";
    }
    return "?";
}

PdeKind parse_pde(std::string_view name) {
    if (name == "convection") return PdeKind::convection;
    if (name == "reaction") return PdeKind::reaction;
    if (name == "wave") return PdeKind::wave;
    if (name == "allen_cahn" || name == "allen-cahn") return PdeKind::allen_cahn;
    throw std::invalid_argument("unknown pde '" + std::string(name) + "'");
}

std::string_view to_string(BoundaryTag tag) {
    switch (tag) {
    case BoundaryTag::initial_value: return "initial_value";
    case BoundaryTag::initial_velocity: return "initial_velocity";
    case BoundaryTag::dirichlet: return "dirichlet";
    case BoundaryTag::periodic_value: return "periodic_value";
    case BoundaryTag::periodic_derivative: return "periodic_derivative";
    }
    return "?";
}

PdeProblem PdeProblem::make(PdeKind kind, const std::map<std::string, double>& overrides) {
    PdeProblem p;
    p.kind_ = kind;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    switch (kind) {
    case PdeKind::convection:
        p.domain_ = {0.0, two_pi, 0.0, 1.0};
        p.params_ = {{"beta", 50.0}};
        break;
    case PdeKind::reaction:
        p.domain_ = {0.0, two_pi, 0.0, 1.0};
        p.params_ = {{"rho", 5.0}};
        break;
    case PdeKind::wave:
        p.domain_ = {0.0, 1.0, 0.0, 1.0};
        p.params_ = {{"beta", 3.0}};
        break;
    case PdeKind::allen_cahn:
        p.domain_ = {-1.0, 1.0, 0.0, 1.0};
        break;
    }
    for (const auto& [name, value] : overrides) {
        auto it = p.params_.find(name);
        if (it == p.params_.end()) {
            throw std::invalid_argument("pde '" + std::string(to_string(kind)) + "' has no parameter '" + name + "'");
        }
        it->second = value;
    }
    if (auto it = p.params_.find("beta"); it != p.params_.end()) p.beta_ = it->second;
    if (auto it = p.params_.find("rho"); it != p.params_.end()) p.rho_ = it->second;
    return p;
}

double PdeProblem::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw std::invalid_argument("pde parameter '" + name + "' not defined");
    }
    return it->second;
}

JetComponents PdeProblem::interior_components() const {
    switch (kind_) {
    case PdeKind::convection: return {true, true, false, false};
    case PdeKind::reaction: return {false, true, false, false};
    case PdeKind::wave: return {true, true, true, true};
    case PdeKind::allen_cahn: return {true, true, true, false};
    }
    return {};
}

JetComponents PdeProblem::boundary_components() const {
    switch (kind_) {
    case PdeKind::wave: return {false, true, false, false};
    case PdeKind::allen_cahn: return {true, false, false, false};
    default: return {};
    }
}

std::vector<BoundaryTag> PdeProblem::boundary_terms() const {
    switch (kind_) {
    case PdeKind::convection:
    case PdeKind::reaction: return {BoundaryTag::initial_value, BoundaryTag::periodic_value};
    case PdeKind::wave: return {BoundaryTag::initial_value, BoundaryTag::initial_velocity, BoundaryTag::dirichlet};
    case PdeKind::allen_cahn:
        return {BoundaryTag::initial_value, BoundaryTag::periodic_value, BoundaryTag::periodic_derivative};
    }
    return {};
}

double PdeProblem::initial_value(double x) const {
    switch (kind_) {
    case PdeKind::convection: return std::sin(x);
    case PdeKind::reaction: return reaction_bump(x);
    case PdeKind::wave: return std::sin(std::numbers::pi * x) + 0.5 * std::sin(beta_ * std::numbers::pi * x);
    case PdeKind::allen_cahn: return allen_cahn_initial(x);
    }
    return 0.0;
}

bool PdeProblem::has_reference() const { return kind_ != PdeKind::allen_cahn || ac_reference_ != nullptr; }

double PdeProblem::reference(double x, double t) const {
    switch (kind_) {
    case PdeKind::convection: return analytic_convection(x, t, beta_);
    case PdeKind::reaction: return analytic_reaction(x, t, rho_);
    case PdeKind::wave: return analytic_wave(x, t, beta_);
    case PdeKind::allen_cahn:
        if (!ac_reference_) {
            throw std::runtime_error("allen_cahn reference not attached; run the oracle first");
        }
        return ac_reference_->at(x, t);
    }
    return 0.0;
}

CollocationSet make_grid(const PdeProblem& problem, int nx, int nt) {
    if (nx < 2 || nt < 2) {
        throw std::invalid_argument("make_grid: nx and nt must be at least 2");
    }
    const Domain& d = problem.domain();
    CollocationSet set;
    set.nx = nx;
    set.nt = nt;
    const auto xs = [&](int i) { return i == nx - 1 ? d.x_max : d.x_min + (d.x_max - d.x_min) * i / (nx - 1); };
    const auto ts = [&](int j) { return j == nt - 1 ? d.t_max : d.t_min + (d.t_max - d.t_min) * j / (nt - 1); };
    set.interior.reserve(std::size_t(nx) * std::size_t(nt));
    for (int j = 0; j < nt; ++j) {
        for (int i = 0; i < nx; ++i) {
            set.interior.push_back({xs(i), ts(j)});
        }
    }

    const auto terms = problem.boundary_terms();
    const auto has = [&](BoundaryTag tag) { return std::find(terms.begin(), terms.end(), tag) != terms.end(); };
    for (const BoundaryTag tag : {BoundaryTag::initial_value, BoundaryTag::initial_velocity}) {
        if (!has(tag)) continue;
        for (int i = 0; i < nx; ++i) {
            set.boundary.push_back({tag, {xs(i), d.t_min}, {}});
        }
    }
    for (int j = 1; j < nt; ++j) {
        const Point left{d.x_min, ts(j)};
        const Point right{d.x_max, ts(j)};
        if (has(BoundaryTag::periodic_value)) set.boundary.push_back({BoundaryTag::periodic_value, left, right});
        if (has(BoundaryTag::periodic_derivative))
            set.boundary.push_back({BoundaryTag::periodic_derivative, left, right});
        if (has(BoundaryTag::dirichlet)) {
            set.boundary.push_back({BoundaryTag::dirichlet, left, {}});
            set.boundary.push_back({BoundaryTag::dirichlet, right, {}});
        }
    }
    return set;
}

Jet<ad::Var> field_jet(ad::Tape& tape, const ad::FieldBuilder& u, double x, double t, std::span<const ad::Var> params,
                       JetComponents comps) {
    comps = comps.normalized();
    const ad::Var xv = tape.variable(x);
    const ad::Var tv = tape.variable(t);
    Jet<ad::Var> j;
    j.u = u(tape, xv, tv, params);
    const ad::Var zero = tape.constant(0.0);
    j.ux = j.ut = j.uxx = j.utt = zero;
    if (comps.dx || comps.dt) {
        const ad::Var wrt[] = {xv, tv};
        const auto first = tape.grad_graph(j.u, wrt);
        j.ux = first[0];
        j.ut = first[1];
    }
    if (comps.dxx) {
        const ad::Var wrt[] = {xv};
        j.uxx = tape.grad_graph(j.ux, wrt)[0];
    }
    if (comps.dtt) {
        const ad::Var wrt[] = {tv};
        j.utt = tape.grad_graph(j.ut, wrt)[0];
    }
    return j;
}

namespace {

std::vector<ad::Var> leaves(ad::Tape& tape, std::span<const double> values) {
    std::vector<ad::Var> out;
    out.reserve(values.size());
    for (double v : values) {
        out.push_back(tape.variable(v));
    }
    return out;
}

}  // namespace

double residual_at(const PdeProblem& problem, const ad::FieldBuilder& u, std::span<const double> params, Point p,
                   PrecisionSpec precision) {
    ad::Tape tape(precision);
    const auto theta = leaves(tape, params);
    const auto jet = field_jet(tape, u, p.x, p.t, theta, problem.interior_components());
    return problem.residual(jet).value();
}

std::vector<double> boundary_residuals(const PdeProblem& problem, const ad::FieldBuilder& u,
                                       std::span<const double> params, std::span<const BoundaryConstraint> constraints,
                                       PrecisionSpec precision) {
    const auto allowed = problem.boundary_terms();
    std::vector<double> out;
    out.reserve(constraints.size());
    for (const auto& c : constraints) {
        if (std::find(allowed.begin(), allowed.end(), c.tag) == allowed.end()) {
            throw std::invalid_argument("boundary tag '" + std::string(to_string(c.tag)) + "' not valid for " +
                                        std::string(to_string(problem.kind())));
        }
        ad::Tape tape(precision);
        const auto theta = leaves(tape, params);
        const auto comps = problem.boundary_components();
        const auto at = field_jet(tape, u, c.at.x, c.at.t, theta, comps);
        Jet<ad::Var> partner = at;
        if (c.tag == BoundaryTag::periodic_value || c.tag == BoundaryTag::periodic_derivative) {
            partner = field_jet(tape, u, c.partner.x, c.partner.t, theta, comps);
        }
        out.push_back(problem.boundary_violation(c, at, partner).value());
    }
    return out;
}

ad::FieldBuilder analytic_field(const PdeProblem& problem) {
    switch (problem.kind()) {
    case PdeKind::convection: {
        const double beta = problem.param("beta");
        return [beta](ad::Tape&, ad::Var x, ad::Var t, std::span<const ad::Var>) {
            return analytic_convection(x, t, beta);
        };
    }
    case PdeKind::reaction: {
        const double rho = problem.param("rho");
        return [rho](ad::Tape&, ad::Var x, ad::Var t, std::span<const ad::Var>) {
            return analytic_reaction(x, t, rho);
        };
    }
    case PdeKind::wave: {
        const double beta = problem.param("beta");
        return [beta](ad::Tape&, ad::Var x, ad::Var t, std::span<const ad::Var>) {
            return analytic_wave(x, t, beta);
        };
    }
    case PdeKind::allen_cahn: break;
    }
    throw std::invalid_argument("allen_cahn has no closed-form solution");
}

void write_reference_csv(const PdeProblem& problem, int nx, int nt, const std::string& path) {
    const auto grid = make_grid(problem, nx, nt);
    CsvWriter csv(path, {"x", "t", "u"});
    for (const auto& p : grid.interior) {
        csv.row(p.x, p.t, problem.reference(p.x, p.t));
    }
}

}  // namespace pinnlab

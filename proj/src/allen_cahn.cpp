#include "pinnlab/allen_cahn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pinnlab {

double allen_cahn_initial(double x) { return x * x * std::cos(std::numbers::pi * x); }

namespace {

// Solves the symmetric cyclic system (1 + 2a) u_i - a u_{i-1} - a u_{i+1} = rhs_i
// via Sherman-Morrison on top of the Thomas algorithm. The factorisation is
// built once; solve() is O(n).
class CyclicSolver {
public:
    CyclicSolver(int n, double a) : n_(n), a_(a) {
        const double diag = 1.0 + 2.0 * a;
        gamma_ = -diag;
        // Modified tridiagonal matrix: first/last diagonal corrected for the
        // rank-one corner term u v^T with u = (gamma, 0.., -a), v = (1, 0.., -a/gamma).
        main_.assign(std::size_t(n), diag);
        main_.front() = diag - gamma_;
        main_.back() = diag - a * a / gamma_;
        factor();
        std::vector<double> u(std::size_t(n), 0.0);
        u.front() = gamma_;
        u.back() = -a;
        z_ = u;
        thomas(z_);
    }

    void solve(std::vector<double>& rhs) const {
        thomas(rhs);
        const double vx = rhs.front() - a_ / gamma_ * rhs.back();
        const double vz = z_.front() - a_ / gamma_ * z_.back();
        const double factor = vx / (1.0 + vz);
        for (std::size_t i = 0; i < rhs.size(); ++i) {
            rhs[i] -= factor * z_[i];
        }
    }

private:
    void factor() {
        cprime_.assign(std::size_t(n_), 0.0);
        denom_.assign(std::size_t(n_), 0.0);
        const double off = -a_;
        denom_[0] = main_[0];
        cprime_[0] = off / denom_[0];
        for (int i = 1; i < n_; ++i) {
            const auto k = std::size_t(i);
            denom_[k] = main_[k] - off * cprime_[k - 1];
            cprime_[k] = off / denom_[k];
        }
    }

    void thomas(std::vector<double>& d) const {
        const double off = -a_;
        d[0] /= denom_[0];
        for (int i = 1; i < n_; ++i) {
            const auto k = std::size_t(i);
            d[k] = (d[k] - off * d[k - 1]) / denom_[k];
        }
        for (int i = n_ - 2; i >= 0; --i) {
            const auto k = std::size_t(i);
            d[k] -= cprime_[k] * d[k + 1];
        }
    }

    int n_;
    double a_;
    double gamma_;
    std::vector<double> main_, cprime_, denom_, z_;
};

}  // namespace

AllenCahnReference AllenCahnReference::solve(const ImexConfig& config) {
    if (config.space_points < 3 || config.time_steps < 1 || config.snapshots < 1 ||
        config.time_steps % config.snapshots != 0) {
        throw std::invalid_argument("allen-cahn oracle: invalid resolution");
    }
    AllenCahnReference ref;
    ref.config_ = config;
    const int n = config.space_points;
    const double dx = 2.0 / n;
    const double dt = 1.0 / config.time_steps;
    const double a = dt * config.diffusion / (dx * dx);
    const CyclicSolver solver(n, a);

    std::vector<double> u(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        u[std::size_t(i)] = allen_cahn_initial(-1.0 + dx * i);
    }
    ref.levels_.reserve(std::size_t(config.snapshots) + 1);
    ref.levels_.push_back(u);
    const int stride = config.time_steps / config.snapshots;
    for (int step = 1; step <= config.time_steps; ++step) {
        for (double& v : u) {
            v += dt * config.reaction * (v - v * v * v);
        }
        solver.solve(u);
        if (step % stride == 0) {
            for (double v : u) {
                if (!std::isfinite(v) || std::fabs(v) > config.blowup_bound) {
                    throw std::runtime_error("allen-cahn oracle diverged at step " + std::to_string(step));
                }
            }
            ref.levels_.push_back(u);
        }
    }
    return ref;
}

double AllenCahnReference::at(double x, double t) const {
    if (t <= 0.0) {
        return allen_cahn_initial(x);
    }
    const int n = config_.space_points;
    const double dx = 2.0 / n;
    const auto space = [&](const std::vector<double>& level) {
        double s = (x + 1.0) / dx;
        s -= n * std::floor(s / n);
        auto i0 = static_cast<int>(std::floor(s));
        const double w = s - i0;
        i0 %= n;
        const int i1 = (i0 + 1) % n;
        if (w == 0.0) {
            return level[std::size_t(i0)];
        }
        return (1.0 - w) * level[std::size_t(i0)] + w * level[std::size_t(i1)];
    };
    const double tau = std::min(t, 1.0) * config_.snapshots;
    const auto k0 = static_cast<std::size_t>(std::floor(tau));
    const double w = tau - double(k0);
    if (w == 0.0 || k0 + 1 >= levels_.size()) {
        return space(levels_[std::min(k0, levels_.size() - 1)]);
    }
    return (1.0 - w) * space(levels_[k0]) + w * space(levels_[k0 + 1]);
}

std::vector<double> AllenCahnReference::sample(int nx, int nt) const {
    std::vector<double> out;
    out.reserve(std::size_t(nx) * std::size_t(nt));
    for (int j = 0; j < nt; ++j) {
        const double t = double(j) / (nt - 1);
        for (int i = 0; i < nx; ++i) {
            out.push_back(at(-1.0 + 2.0 * i / (nx - 1), t));
        }
    }
    return out;
}

double AllenCahnReference::max_abs() const {
    double m = 0.0;
    for (const auto& level : levels_) {
        for (double v : level) {
            m = std::max(m, std::fabs(v));
        }
    }
    return m;
}

}  // namespace pinnlab

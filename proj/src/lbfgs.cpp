#include "pinnlab/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pinnlab {

namespace {

// Invokes f with a double -> double rounding functor for the given precision.
template <typename F>
decltype(auto) with_rounder(const PrecisionSpec& p, F&& f) {
    switch (p.format) {
    case Format::fp64: return f([](double v) { return v; });
    case Format::fp32: return f([](double v) { return double(float(v)); });
    default: break;
    }
    return f([p](double v) { return round_to(p, v); });
}

double dot(const PrecisionSpec& p, std::span<const double> a, std::span<const double> b) {
    return with_rounder(p, [&](auto r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            acc = r(acc + r(a[i] * b[i]));
        }
        return acc;
    });
}

// y += alpha * x
void axpy(const PrecisionSpec& p, double alpha, std::span<const double> x, std::span<double> y) {
    with_rounder(p, [&](auto r) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = r(y[i] + r(alpha * x[i]));
        }
    });
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::fabs(x));
    }
    return m;
}

double l1_norm(const PrecisionSpec& p, std::span<const double> v) {
    return with_rounder(p, [&](auto r) {
        double acc = 0.0;
        for (double x : v) {
            acc = r(acc + std::fabs(x));
        }
        return acc;
    });
}

double finite_or_inf(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); }

}  // namespace

std::string_view to_string(StopReason reason) {
    switch (reason) {
    case StopReason::max_inner: return "MaxInner";
    case StopReason::grad_tolerance: return "GradTolerance";
    case StopReason::change_tolerance: return "ChangeTolerance";
    case StopReason::loss_change_tolerance: return "LossChangeTolerance";
    case StopReason::line_search_fail: return "LineSearchFail";
    }
    return "?";
}

StopReason parse_stop_reason(std::string_view name) {
    for (auto r : {StopReason::max_inner, StopReason::grad_tolerance, StopReason::change_tolerance,
                   StopReason::loss_change_tolerance, StopReason::line_search_fail}) {
        if (to_string(r) == name) {
            return r;
        }
    }
    throw std::invalid_argument("unknown stop reason '" + std::string(name) + "'");
}

double cubic_minimizer(double x1, double f1, double g1, double x2, double f2, double g2, double lo, double hi) {
    const double mid = 0.5 * (lo + hi);
    const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    const double d2_square = d1 * d1 - g1 * g2;
    if (!(d2_square >= 0.0)) {
        return mid;
    }
    const double d2 = std::sqrt(d2_square);
    double min_pos;
    if (x1 <= x2) {
        min_pos = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
    } else {
        min_pos = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    }
    if (!std::isfinite(min_pos)) {
        return mid;
    }
    return std::min(std::max(min_pos, lo), hi);
}

LineSearchResult strong_wolfe(const LineFunction& phi, LineSample at_zero, double alpha0, const WolfeParams& wp) {
    if (!(at_zero.slope < 0.0)) {
        throw std::invalid_argument("strong_wolfe: direction is not a descent direction");
    }
    const auto r = [&](double v) { return round_to(wp.precision, v); };
    const double f0 = at_zero.value;
    const double gtd0 = at_zero.slope;
    const double curvature_bound = r(-wp.c2 * gtd0);
    const auto armijo_violated = [&](double t, double f) { return f > r(f0 + r(wp.c1 * r(t * gtd0))); };

    LineSearchResult out;
    bool any_finite = false;
    const auto eval = [&](double t) {
        LineSample s = phi(t);
        ++out.evals;
        if (std::isfinite(s.value)) {
            any_finite = true;
        }
        s.value = finite_or_inf(s.value);
        if (!std::isfinite(s.slope)) {
            s.slope = std::numeric_limits<double>::infinity();
        }
        return s;
    };

    struct Pt {
        double t, f, g;
    };
    Pt lo_b{}, hi_b{};  // bracket[0], bracket[1]
    bool done = false;

    double t = r(alpha0);
    LineSample cur = eval(t);
    Pt prev{0.0, f0, gtd0};
    int ls_iter = 0;
    bool bracketed = false;
    while (ls_iter < wp.max_evals) {
        if (armijo_violated(t, cur.value) || (ls_iter > 1 && cur.value >= prev.f)) {
            lo_b = prev;
            hi_b = {t, cur.value, cur.slope};
            bracketed = true;
            break;
        }
        if (std::fabs(cur.slope) <= curvature_bound) {
            lo_b = hi_b = {t, cur.value, cur.slope};
            done = true;
            bracketed = true;
            break;
        }
        if (cur.slope >= 0.0) {
            lo_b = prev;
            hi_b = {t, cur.value, cur.slope};
            bracketed = true;
            break;
        }
        const double min_step = t + 0.01 * (t - prev.t);
        const double max_step = t * 10.0;
        const double next = r(cubic_minimizer(prev.t, prev.f, prev.g, t, cur.value, cur.slope, min_step, max_step));
        prev = {t, cur.value, cur.slope};
        t = next;
        cur = eval(t);
        ++ls_iter;
    }
    if (!bracketed) {
        lo_b = {0.0, f0, gtd0};
        hi_b = {t, cur.value, cur.slope};
    }

    // Zoom. b[low] always holds the best sufficient-decrease point so far.
    Pt b[2] = {lo_b, hi_b};
    int low = b[0].f <= b[1].f ? 0 : 1;
    int high = 1 - low;
    bool insufficient_progress = false;
    bool collapsed = false;
    while (!done && ls_iter < wp.max_evals) {
        if (std::fabs(b[1].t - b[0].t) * wp.direction_scale < wp.interval_tolerance) {
            collapsed = true;
            break;
        }
        const double bmax = std::max(b[0].t, b[1].t);
        const double bmin = std::min(b[0].t, b[1].t);
        t = cubic_minimizer(b[0].t, b[0].f, b[0].g, b[1].t, b[1].f, b[1].g, bmin, bmax);
        const double eps = 0.1 * (bmax - bmin);
        if (std::min(bmax - t, t - bmin) < eps) {
            if (insufficient_progress || t >= bmax || t <= bmin) {
                t = std::fabs(t - bmax) < std::fabs(t - bmin) ? bmax - eps : bmin + eps;
                insufficient_progress = false;
            } else {
                insufficient_progress = true;
            }
        } else {
            insufficient_progress = false;
        }
        t = r(t);
        cur = eval(t);
        ++ls_iter;
        if (armijo_violated(t, cur.value) || cur.value >= b[low].f) {
            b[high] = {t, cur.value, cur.slope};
            low = b[0].f <= b[1].f ? 0 : 1;
            high = 1 - low;
        } else {
            if (std::fabs(cur.slope) <= curvature_bound) {
                done = true;
            } else if (cur.slope * (b[high].t - b[low].t) >= 0.0) {
                b[high] = b[low];
            }
            b[low] = {t, cur.value, cur.slope};
        }
    }

    out.alpha = b[low].t;
    out.value = b[low].f;
    out.slope = b[low].g;
    out.wolfe = out.alpha > 0.0 && !armijo_violated(out.alpha, out.value) && std::fabs(out.slope) <= curvature_bound;
    out.budget_exhausted = !done && !collapsed && ls_iter >= wp.max_evals;
    out.all_non_finite = !any_finite;
    return out;
}

LbfgsState::LbfgsState(LbfgsConfig config, PrecisionSpec precision) : config_(config), precision_(precision) {
    if (config_.max_inner_iter < 1 || config_.history_size < 1 || config_.max_line_search_evals < 1) {
        throw std::invalid_argument("lbfgs: max_inner_iter, history_size and max_line_search_evals must be >= 1");
    }
    if (!(config_.c1 > 0.0 && config_.c1 < config_.c2 && config_.c2 < 1.0)) {
        throw std::invalid_argument("lbfgs: need 0 < c1 < c2 < 1");
    }
}

bool LbfgsState::accept_pair(std::span<const double> s, std::span<const double> y) {
    if (s.size() != y.size()) {
        throw std::invalid_argument("accept_pair: s and y lengths differ");
    }
    const double ys = dot(precision_, y, s);
    const double ss = dot(precision_, s, s);
    const double yy = dot(precision_, y, y);
    if (!(ys > 1e-10 * std::sqrt(ss) * std::sqrt(yy))) {
        return false;
    }
    if (int(history_.size()) == config_.history_size) {
        history_.pop_front();
    }
    CurvaturePair pair;
    pair.s.assign(s.begin(), s.end());
    pair.y.assign(y.begin(), y.end());
    pair.rho = round_to(precision_, 1.0 / ys);
    history_.push_back(std::move(pair));
    gamma_ = round_to(precision_, ys / yy);
    return true;
}

std::vector<double> LbfgsState::two_loop_direction(std::span<const double> grad) const {
    const auto& p = precision_;
    std::vector<double> q(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        q[i] = -grad[i];
    }
    std::vector<double> alpha(history_.size());
    for (std::size_t k = history_.size(); k-- > 0;) {
        const auto& h = history_[k];
        alpha[k] = round_to(p, dot(p, h.s, q) * h.rho);
        axpy(p, -alpha[k], h.y, q);
    }
    with_rounder(p, [&](auto r) {
        for (double& v : q) {
            v = r(v * gamma_);
        }
    });
    for (std::size_t k = 0; k < history_.size(); ++k) {
        const auto& h = history_[k];
        const double beta = round_to(p, dot(p, h.y, q) * h.rho);
        axpy(p, round_to(p, alpha[k] - beta), h.s, q);
    }
    return q;
}

void LbfgsState::reset() {
    history_.clear();
    gamma_ = 1.0;
    iterations_since_reset_ = 0;
    direction_.clear();
    prev_grad_.clear();
    step_size_ = 0.0;
    cache_valid_ = false;
}

StepReport step(LbfgsState& st, const Objective& objective, std::span<double> x) {
    const LbfgsConfig& cfg = st.config_;
    const PrecisionSpec& prec = st.precision_;
    const auto r = [&](double v) { return round_to(prec, v); };
    const std::size_t n = x.size();
    StepReport rep;

    std::vector<double> g;
    double loss;
    if (st.cache_valid_ && st.cached_x_.size() == n && std::equal(x.begin(), x.end(), st.cached_x_.begin())) {
        loss = st.cached_loss_;
        g = st.cached_grad_;
    } else {
        loss = objective(x, g);
        ++rep.function_evals;
    }
    if (!std::isfinite(loss)) {
        throw NonFiniteLossError("lbfgs: non-finite loss at the current iterate");
    }
    if (g.size() != n) {
        throw std::invalid_argument("lbfgs: objective returned a gradient of the wrong length");
    }
    rep.loss_before = loss;

    const double tol_grad = r(cfg.tolerance_grad);
    const double tol_change = r(cfg.tolerance_change);
    int n_iter = 0;
    StopReason reason = StopReason::max_inner;

    if (max_abs(g) <= tol_grad) {
        reason = StopReason::grad_tolerance;
    } else {
        auto& d = st.direction_;
        auto& t = st.step_size_;
        std::vector<double> trial(n);
        struct Trial {
            double alpha;
            double loss;
            std::vector<double> grad;
        };
        std::vector<Trial> trials;

        while (true) {
            ++n_iter;
            ++st.iterations_since_reset_;
            if (st.iterations_since_reset_ == 1) {
                d.resize(n);
                for (std::size_t i = 0; i < n; ++i) {
                    d[i] = -g[i];
                }
                st.history_.clear();
                st.gamma_ = 1.0;
            } else {
                std::vector<double> y(n), s(n);
                for (std::size_t i = 0; i < n; ++i) {
                    y[i] = r(g[i] - st.prev_grad_[i]);
                    s[i] = r(d[i] * t);
                }
                if (st.accept_pair(s, y)) {
                    ++rep.pairs_accepted;
                }
                d = st.two_loop_direction(g);
            }
            st.prev_grad_ = g;
            const double prev_loss = loss;

            if (st.iterations_since_reset_ == 1) {
                t = r(std::min(1.0, r(1.0 / l1_norm(prec, g))) * cfg.learning_rate);
            } else {
                t = r(cfg.learning_rate);
            }
            const double gtd = dot(prec, g, d);
            if (!(gtd < -tol_change)) {
                // Directional derivative too small to make progress along d.
                reason = StopReason::change_tolerance;
                break;
            }

            trials.clear();
            const auto phi = [&](double alpha) {
                for (std::size_t i = 0; i < n; ++i) {
                    trial[i] = r(x[i] + r(alpha * d[i]));
                }
                Trial tr{alpha, 0.0, {}};
                tr.loss = objective(trial, tr.grad);
                ++rep.function_evals;
                const double slope = dot(prec, tr.grad, d);
                const LineSample sample{tr.loss, slope};
                trials.push_back(std::move(tr));
                return sample;
            };
            WolfeParams wp;
            wp.c1 = cfg.c1;
            wp.c2 = cfg.c2;
            wp.max_evals = cfg.max_line_search_evals;
            wp.interval_tolerance = cfg.line_search_tolerance;
            wp.direction_scale = max_abs(d);
            wp.precision = prec;
            LineSearchResult ls = strong_wolfe(phi, {loss, gtd}, t, wp);

            bool failed = false;
            if (ls.all_non_finite || (ls.budget_exhausted && ls.alpha == 0.0)) {
                // No sufficient-decrease point: one damped step, then give up on this outer step.
                const double damped = r(t / 10.0);
                const LineSample s = phi(damped);
                if (!std::isfinite(s.value)) {
                    throw NonFiniteLossError("lbfgs: line search found no finite loss along the direction");
                }
                ls.alpha = damped;
                ls.value = s.value;
                ls.slope = s.slope;
                ls.wolfe = false;
                failed = true;
            }

            AcceptedStep rec;
            if (st.record_steps) {
                rec.alpha = ls.alpha;
                rec.phi0 = loss;
                rec.dphi0 = gtd;
                rec.phi = ls.value;
                rec.dphi = ls.slope;
                rec.wolfe = ls.wolfe;
                rec.x_before.assign(x.begin(), x.end());
                rec.direction = d;
            }

            t = ls.alpha;
            double max_update = 0.0;  // applied, so updates absorbed by rounding count as zero
            if (t != 0.0) {
                auto it = std::find_if(trials.rbegin(), trials.rend(), [&](const Trial& tr) { return tr.alpha == t; });
                for (std::size_t i = 0; i < n; ++i) {
                    const double next = r(x[i] + r(t * d[i]));
                    max_update = std::max(max_update, std::fabs(r(next - x[i])));
                    x[i] = next;
                }
                loss = it->loss;
                g = std::move(it->grad);
            }
            if (st.record_steps && t != 0.0) {
                rep.steps.push_back(std::move(rec));
            }
            if (!std::isfinite(loss)) {
                throw NonFiniteLossError("lbfgs: non-finite loss after line search");
            }

            if (failed) {
                reason = StopReason::line_search_fail;
                break;
            }
            if (n_iter == cfg.max_inner_iter) {
                reason = StopReason::max_inner;
                break;
            }
            if (max_abs(g) <= tol_grad) {
                reason = StopReason::grad_tolerance;
                break;
            }
            if (max_update <= tol_change) {
                reason = StopReason::change_tolerance;
                break;
            }
            if (std::fabs(r(loss - prev_loss)) < tol_change) {
                reason = StopReason::loss_change_tolerance;
                break;
            }
        }
    }

    st.cached_x_.assign(x.begin(), x.end());
    st.cached_grad_ = g;
    st.cached_loss_ = loss;
    st.cache_valid_ = true;

    ++st.outer_steps_;
    st.total_inner_iters_ += n_iter;
    st.last_inner_count_ = n_iter;
    st.stop_reason_ = reason;

    rep.inner_iters = n_iter;
    rep.stop_reason = reason;
    rep.loss_after = loss;
    rep.grad_inf_norm = max_abs(g);
    return rep;
}

StallReport stall_diagnostic(std::span<const double> params, std::span<const double> update,
                             const PrecisionSpec& precision) {
    StallReport rep;
    rep.max_update = max_abs(update);
    rep.max_param = max_abs(params);
    rep.underflow_stall = rep.max_update < machine_epsilon(precision) * std::max(1.0, rep.max_param);
    return rep;
}

}  // namespace pinnlab

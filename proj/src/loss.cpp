#include "pinnlab/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pinnlab/autodiff.hpp"
#include "pinnlab/jet_kernel.hpp"

namespace pinnlab {

namespace {

constexpr std::size_t kChunk = 256;

bool is_periodic(BoundaryTag tag) {
    return tag == BoundaryTag::periodic_value || tag == BoundaryTag::periodic_derivative;
}

struct JetVars {
    Jet<ad::Var> jet;
    ad::Var leaves[5];
};

JetVars jet_leaves(ad::Tape& tape, const JetBatch& b, std::size_t p) {
    const auto get = [&](const std::vector<double>& v) { return v.empty() ? 0.0 : v[p]; };
    JetVars jv;
    jv.leaves[0] = jv.jet.u = tape.variable(b.u[p]);
    jv.leaves[1] = jv.jet.ux = tape.variable(get(b.ux));
    jv.leaves[2] = jv.jet.ut = tape.variable(get(b.ut));
    jv.leaves[3] = jv.jet.uxx = tape.variable(get(b.uxx));
    jv.leaves[4] = jv.jet.utt = tape.variable(get(b.utt));
    return jv;
}

void scatter_seed(JetBatch& seeds, std::size_t p, double scale, std::span<const double> partials,
                  const PrecisionSpec& spec) {
    const auto put = [&](std::vector<double>& v, double d) {
        if (!v.empty()) {
            v[p] = round_to(spec, v[p] + round_to(spec, scale * d));
        }
    };
    put(seeds.u, partials[0]);
    put(seeds.ux, partials[1]);
    put(seeds.ut, partials[2]);
    put(seeds.uxx, partials[3]);
    put(seeds.utt, partials[4]);
}

void zero(JetBatch& b) {
    for (auto* v : {&b.u, &b.ux, &b.ut, &b.uxx, &b.utt}) {
        std::fill(v->begin(), v->end(), 0.0);
    }
}

}  // namespace

LossEvaluation total_loss(const MlpParams& params, const PdeProblem& problem, const CollocationSet& colloc,
                          LossWeights weights, PrecisionSpec precision, bool with_grad) {
    if (colloc.interior.empty()) {
        throw std::invalid_argument("total_loss: empty interior collocation set");
    }
    const auto r = [&](double v) { return round_to(precision, v); };
    const JetComponents comps = (problem.interior_components() | problem.boundary_components()).normalized();
    JetKernel kernel(params, comps, precision);
    JetBatch jets;
    JetBatch seeds;
    ad::Tape tape(precision);

    const double lambda_f = r(weights.lambda_f);
    const double lambda_b = r(weights.lambda_b);
    const double n_f = double(colloc.interior.size());
    const double seed_f = r(r(2.0 * lambda_f) / n_f);

    double sum_f = 0.0;
    const std::span<const Point> interior(colloc.interior);
    for (std::size_t begin = 0; begin < interior.size(); begin += kChunk) {
        const auto chunk = interior.subspan(begin, std::min(kChunk, interior.size() - begin));
        kernel.forward(chunk, jets);
        if (with_grad) {
            seeds.resize(chunk.size(), comps);
        }
        for (std::size_t p = 0; p < chunk.size(); ++p) {
            tape.clear();
            const JetVars jv = jet_leaves(tape, jets, p);
            const ad::Var res = problem.residual(jv.jet);
            const double value = res.value();
            sum_f = r(sum_f + r(value * value));
            if (with_grad) {
                const auto partials = tape.grad(res, jv.leaves);
                scatter_seed(seeds, p, r(seed_f * value), partials, precision);
            }
        }
        if (with_grad) {
            kernel.backward(seeds);
        }
    }

    double sum_b = 0.0;
    double l_b = 0.0;
    if (!colloc.boundary.empty()) {
        std::vector<Point> pts;
        std::vector<std::ptrdiff_t> partner_index;
        pts.reserve(colloc.boundary.size() * 2);
        for (const auto& c : colloc.boundary) {
            pts.push_back(c.at);
            if (is_periodic(c.tag)) {
                partner_index.push_back(std::ptrdiff_t(pts.size()));
                pts.push_back(c.partner);
            } else {
                partner_index.push_back(-1);
            }
        }
        kernel.forward(pts, jets);
        if (with_grad) {
            seeds.resize(pts.size(), comps);
            zero(seeds);
        }
        const double n_b = double(colloc.boundary.size());
        const double seed_b = r(r(2.0 * lambda_b) / n_b);
        std::size_t cursor = 0;
        for (std::size_t k = 0; k < colloc.boundary.size(); ++k) {
            const auto& c = colloc.boundary[k];
            tape.clear();
            const std::size_t at = cursor++;
            const JetVars jv_at = jet_leaves(tape, jets, at);
            JetVars jv_partner = jv_at;
            if (partner_index[k] >= 0) {
                jv_partner = jet_leaves(tape, jets, std::size_t(partner_index[k]));
                ++cursor;
            }
            const ad::Var viol = problem.boundary_violation(c, jv_at.jet, jv_partner.jet);
            const double value = viol.value();
            sum_b = r(sum_b + r(value * value));
            if (with_grad) {
                const double scale = r(seed_b * value);
                scatter_seed(seeds, at, scale, tape.grad(viol, jv_at.leaves), precision);
                if (partner_index[k] >= 0) {
                    scatter_seed(seeds, std::size_t(partner_index[k]), scale, tape.grad(viol, jv_partner.leaves),
                                 precision);
                }
            }
        }
        if (with_grad) {
            kernel.backward(seeds);
        }
        l_b = r(sum_b / n_b);
    }

    LossEvaluation out;
    out.breakdown.l_f = r(sum_f / n_f);
    out.breakdown.l_b = l_b;
    out.breakdown.lambda_f = lambda_f;
    out.breakdown.lambda_b = lambda_b;
    out.breakdown.total = r(r(lambda_f * out.breakdown.l_f) + r(lambda_b * out.breakdown.l_b));
    if (with_grad) {
        out.grad = kernel.gradient();
    }
    return out;
}

namespace {

// Neumaier summation keeps the metrics within an ulp or so of exact sums.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        comp_ += std::fabs(sum_) >= std::fabs(v) ? (sum_ - t) + v : (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

void check_metric_args(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) {
        throw std::invalid_argument("metric: prediction and truth lengths differ");
    }
}

}  // namespace

double rmae(std::span<const double> pred, std::span<const double> truth) {
    check_metric_args(pred, truth);
    CompensatedSum num, den;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        num.add(std::fabs(pred[i] - truth[i]));
        den.add(std::fabs(truth[i]));
    }
    if (den.value() == 0.0) {
        throw std::invalid_argument("rmae: truth is identically zero");
    }
    return num.value() / den.value();
}

double rrmse(std::span<const double> pred, std::span<const double> truth) {
    check_metric_args(pred, truth);
    CompensatedSum num, den;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        num.add(e * e);
        den.add(truth[i] * truth[i]);
    }
    if (den.value() == 0.0) {
        throw std::invalid_argument("rrmse: truth is identically zero");
    }
    return std::sqrt(num.value() / den.value());
}

ReferenceSet make_reference_set(const PdeProblem& problem, int nx, int nt) {
    if (nx < 2 || nt < 2) {
        throw std::invalid_argument("reference grid needs at least 2 points per axis");
    }
    if (!problem.has_reference()) {
        throw std::invalid_argument("problem '" + std::string(to_string(problem.kind())) + "' has no reference solution");
    }
    const Domain& d = problem.domain();
    ReferenceSet set;
    set.points.reserve(std::size_t(nx) * std::size_t(nt));
    for (int j = 0; j < nt; ++j) {
        const double t = j == nt - 1 ? d.t_max : d.t_min + (d.t_max - d.t_min) * j / (nt - 1);
        for (int i = 0; i < nx; ++i) {
            const double x = i == nx - 1 ? d.x_max : d.x_min + (d.x_max - d.x_min) * i / (nx - 1);
            set.points.push_back({x, t});
            set.truth.push_back(problem.reference(x, t));
        }
    }
    return set;
}

FieldError field_error(const MlpParams& params, const ReferenceSet& ref) {
    const auto pred = predict(params, ref.points, kFp64);
    return {rmae(pred, ref.truth), rrmse(pred, ref.truth)};
}

std::string_view to_string(Phase phase) {
    switch (phase) {
    case Phase::unconverged: return "UnConverged";
    case Phase::failure: return "Failure";
    case Phase::success: return "Success";
    }
    return "?";
}

Phase parse_phase(std::string_view name) {
    if (name == "UnConverged" || name == "unconverged") return Phase::unconverged;
    if (name == "Failure" || name == "failure") return Phase::failure;
    if (name == "Success" || name == "success") return Phase::success;
    throw std::invalid_argument("unknown phase '" + std::string(name) + "'");
}

void PhaseThresholds::validate() const {
    if (!(loss_low > 0.0) || !(err_low >= 0.0) || !(err_low < err_high)) {
        throw std::invalid_argument("phase thresholds need loss_low > 0 and 0 <= err_low < err_high");
    }
}

Phase classify_phase(double loss, double rmae_value, const PhaseThresholds& cfg, std::optional<Phase> previous) {
    cfg.validate();
    if (loss > cfg.loss_low) {
        return Phase::unconverged;
    }
    if (rmae_value >= cfg.err_high) {
        return Phase::failure;
    }
    if (rmae_value <= cfg.err_low) {
        return Phase::success;
    }
    if (previous && *previous != Phase::unconverged) {
        return *previous;
    }
    return Phase::failure;
}

int count_phase_regressions(std::span<const Phase> sequence) {
    int n = 0;
    for (std::size_t i = 1; i < sequence.size(); ++i) {
        if (int(sequence[i]) < int(sequence[i - 1])) {
            ++n;
        }
    }
    return n;
}

}  // namespace pinnlab

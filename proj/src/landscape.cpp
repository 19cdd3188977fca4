#include "pinnlab/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "pinnlab/csv.hpp"
#include "pinnlab/rng.hpp"

namespace pinnlab {

namespace {

struct Sample {
    double loss;
    double rmae;
};

Sample probe_at(const MlpParams& params, const LandscapeProbe& probe) {
    const auto eval = total_loss(params, probe.problem, probe.colloc, probe.weights, kFp64, false);
    return {eval.breakdown.total, field_error(params, probe.reference).rmae};
}

// Evaluates make(k) for k in [0, count) and stores results in order. Work is
// split round-robin across threads; each evaluation is independent.
template <typename Make>
void evaluate_all(std::size_t count, const LandscapeProbe& probe, const Make& make, std::vector<double>& loss,
                  std::vector<double>& err) {
    loss.assign(count, 0.0);
    err.assign(count, 0.0);
    const auto worker = [&](std::size_t first, std::size_t stride) {
        for (std::size_t k = first; k < count; k += stride) {
            const Sample s = probe_at(make(k), probe);
            loss[k] = s.loss;
            err[k] = s.rmae;
        }
    };
    const std::size_t nthreads = std::size_t(std::max(1, probe.threads));
    if (nthreads == 1) {
        worker(0, 1);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back(worker, t, nthreads);
    }
    for (auto& th : pool) {
        th.join();
    }
}

std::vector<double> uniform_grid(double lo, double hi, int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        g[std::size_t(k)] = k == n - 1 ? hi : lo + (hi - lo) * k / (n - 1);
    }
    return g;
}

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

}  // namespace

LandscapeSlice interpolate_segment(const MlpParams& theta_a, const MlpParams& theta_b, int n_points,
                                   const LandscapeProbe& probe) {
    if (theta_a.size() != theta_b.size() || !theta_a.same_shape(theta_b)) {
        throw std::invalid_argument("interpolate_segment: anchors have different shapes");
    }
    if (n_points < 2) {
        throw std::invalid_argument("interpolate_segment: need at least 2 points");
    }
    LandscapeSlice slice;
    slice.kind = SliceKind::segment;
    slice.alphas = uniform_grid(0.0, 1.0, n_points);
    const auto a = theta_a.flat();
    const auto b = theta_b.flat();
    const auto make = [&](std::size_t k) {
        const double alpha = slice.alphas[k];
        MlpParams p = theta_a;
        auto out = p.flat();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = (1.0 - alpha) * a[i] + alpha * b[i];
        }
        return p;
    };
    evaluate_all(slice.alphas.size(), probe, make, slice.loss, slice.rmae);
    return slice;
}

std::vector<std::vector<double>> plane_directions(const MlpParams& center, std::uint64_t seed) {
    Rng rng(seed);
    const auto c = center.flat();
    std::vector<std::vector<double>> dirs(2, std::vector<double>(c.size()));
    for (auto& d : dirs) {
        for (double& v : d) {
            v = rng.normal();
        }
        for (const auto& layer : center.layers()) {
            const std::size_t begin = layer.weight_offset;
            const std::size_t end = layer.bias_offset + std::size_t(layer.out);
            const double target = norm2(c.subspan(begin, end - begin));
            const double have = norm2(std::span<const double>(d).subspan(begin, end - begin));
            const double scale = have > 0.0 ? target / have : 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                d[i] *= scale;
            }
        }
    }
    auto& d1 = dirs[0];
    auto& d2 = dirs[1];
    const double n1 = norm2(d1);
    if (n1 > 0.0) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d1.size(); ++i) {
            dot += d1[i] * d2[i];
        }
        const double coef = dot / (n1 * n1);
        for (std::size_t i = 0; i < d1.size(); ++i) {
            d2[i] -= coef * d1[i];
        }
        const double n2 = norm2(d2);
        if (n2 > 0.0) {
            for (double& v : d2) {
                v *= n1 / n2;
            }
        }
    }
    return dirs;
}

LandscapeSlice slice_2d(const MlpParams& center, std::uint64_t seed, double extent, int n,
                        const LandscapeProbe& probe) {
    if (n < 2) {
        throw std::invalid_argument("slice_2d: need at least 2 points per axis");
    }
    LandscapeSlice slice;
    slice.kind = SliceKind::plane;
    slice.alphas = uniform_grid(-extent, extent, n);
    slice.betas = slice.alphas;
    slice.directions = plane_directions(center, seed);
    // Odd n puts an exact zero at the centre so the centre value is the
    // checkpoint's own loss.
    if (n % 2 == 1) {
        slice.alphas[std::size_t(n / 2)] = 0.0;
        slice.betas[std::size_t(n / 2)] = 0.0;
    }
    const auto c = center.flat();
    const auto& d1 = slice.directions[0];
    const auto& d2 = slice.directions[1];
    const auto make = [&](std::size_t k) {
        const double a = slice.alphas[k / std::size_t(n)];
        const double b = slice.betas[k % std::size_t(n)];
        MlpParams p = center;
        auto out = p.flat();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = c[i] + (a * d1[i] + b * d2[i]);
        }
        return p;
    };
    evaluate_all(std::size_t(n) * std::size_t(n), probe, make, slice.loss, slice.rmae);
    return slice;
}

double barrier_height(std::span<const double> loss) {
    if (loss.size() < 2) {
        throw std::invalid_argument("barrier_height: need at least two samples");
    }
    const double ends = std::max(loss.front(), loss.back());
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k + 1 < loss.size(); ++k) {
        peak = std::max(peak, loss[k]);
    }
    return std::max(0.0, peak - ends);
}

double barrier_height(const LandscapeSlice& slice) {
    if (slice.kind != SliceKind::segment) {
        throw std::invalid_argument("barrier_height: slice is not a segment");
    }
    return barrier_height(slice.loss);
}

void write_slice_csv(const LandscapeSlice& slice, const std::string& path) {
    if (slice.kind == SliceKind::segment) {
        CsvWriter csv(path, {"alpha", "loss", "rmae"});
        for (std::size_t k = 0; k < slice.alphas.size(); ++k) {
            csv.row(slice.alphas[k], slice.loss[k], slice.rmae[k]);
        }
        return;
    }
    CsvWriter csv(path, {"alpha", "beta", "loss", "rmae"});
    const std::size_t n = slice.betas.size();
    for (std::size_t k = 0; k < slice.loss.size(); ++k) {
        csv.row(slice.alphas[k / n], slice.betas[k % n], slice.loss[k], slice.rmae[k]);
    }
}

}  // namespace pinnlab

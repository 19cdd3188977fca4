#pragma once

// Batched evaluation of the MLP together with its input derivatives
// ("jets": u, u_x, u_t, u_xx, u_tt) and the matching reverse pass to the
// parameters. Input derivatives are propagated forward through each layer,
// the parameter gradient is obtained by a reverse sweep over the same layer
// operations, so the gradient of any loss built from jets costs one forward
// and one backward sweep per point.
//
// All arithmetic rounds after each primitive in the requested precision.
// Reductions over neurons run in ascending index order and parameter-gradient
// accumulation runs over points in submission order, across calls, so
// results do not depend on how a point set is chunked.

#include <memory>
#include <span>
#include <vector>

#include "pinnlab/model.hpp"
#include "pinnlab/precision.hpp"

namespace pinnlab {

/// Which input derivatives to propagate. Second-order entries imply the
/// corresponding first-order entry.
struct JetComponents {
    bool dx = false;
    bool dt = false;
    bool dxx = false;
    bool dtt = false;

    JetComponents normalized() const { return {dx || dxx, dt || dtt, dxx, dtt}; }
    JetComponents operator|(const JetComponents& o) const {
        return {dx || o.dx, dt || o.dt, dxx || o.dxx, dtt || o.dtt};
    }
};

/// Structure-of-arrays jets; unused components stay empty.
struct JetBatch {
    std::vector<double> u, ux, ut, uxx, utt;

    void resize(std::size_t n, const JetComponents& comps);
    std::size_t size() const { return u.size(); }
};

class JetKernel {
public:
    JetKernel(const MlpParams& params, JetComponents comps, PrecisionSpec precision);
    ~JetKernel();
    JetKernel(JetKernel&&) noexcept;
    JetKernel& operator=(JetKernel&&) noexcept;

    const JetComponents& components() const { return comps_; }
    const PrecisionSpec& precision() const { return precision_; }

    /// Evaluates jets for `points`; activations are cached for backward().
    void forward(std::span<const Point> points, JetBatch& out);

    /// Reverse pass for the most recent forward(): `seeds` holds
    /// d(objective)/d(jet component) per point. Adds into the internal
    /// gradient accumulator.
    void backward(const JetBatch& seeds);

    void reset_gradient();
    /// Accumulated gradient in flat parameter order.
    std::vector<double> gradient() const;

    struct Impl;

private:
    JetComponents comps_;
    PrecisionSpec precision_;
    std::unique_ptr<Impl> impl_;
};

/// Network output only (no derivatives) at each point.
std::vector<double> predict(const MlpParams& params, std::span<const Point> points, PrecisionSpec precision = kFp64);

}  // namespace pinnlab

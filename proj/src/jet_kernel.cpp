#include "pinnlab/jet_kernel.hpp"

#include <algorithm>
#include <cstring>
#include <type_traits>
#include <stdexcept>

namespace pinnlab {

void JetBatch::resize(std::size_t n, const JetComponents& comps) {
    u.assign(n, 0.0);
    ux.assign(comps.dx ? n : 0, 0.0);
    ut.assign(comps.dt ? n : 0, 0.0);
    uxx.assign(comps.dxx ? n : 0, 0.0);
    utt.assign(comps.dtt ? n : 0, 0.0);
}

namespace {

enum class Kind { value, dx, dt, dxx, dtt };

struct Component {
    Kind kind;
    int first_order = -1;  // for second-order components: index of d/dx or d/dt
};

std::vector<Component> component_list(const JetComponents& c) {
    std::vector<Component> list{{Kind::value}};
    int ix = -1;
    int it = -1;
    if (c.dx) {
        ix = int(list.size());
        list.push_back({Kind::dx});
    }
    if (c.dt) {
        it = int(list.size());
        list.push_back({Kind::dt});
    }
    if (c.dxx) list.push_back({Kind::dxx, ix});
    if (c.dtt) list.push_back({Kind::dtt, it});
    return list;
}

std::vector<double>* batch_slot(JetBatch& b, Kind k) {
    switch (k) {
    case Kind::value: return &b.u;
    case Kind::dx: return &b.ux;
    case Kind::dt: return &b.ut;
    case Kind::dxx: return &b.uxx;
    case Kind::dtt: return &b.utt;
    }
    return nullptr;
}

const std::vector<double>* batch_slot(const JetBatch& b, Kind k) {
    return batch_slot(const_cast<JetBatch&>(b), k);
}

// c[v][n] (+)= sum_k a(v, k) * brow(k)[n], summed in ascending k with a
// rounding after every multiply and every add. Register-blocked over (v, n);
// each element still sees exactly the same operation sequence as the naive
// triple loop.
template <std::size_t VB, std::size_t NB, bool Full, typename Arith, typename AFn, typename BFn>
void product_block(const Arith& ar, std::size_t v0, std::size_t vn_, std::size_t n0, std::size_t nn_, std::size_t K,
                   const AFn& a, const BFn& brow, typename Arith::value_type* c, std::size_t ldc, bool zero_init) {
    using T = typename Arith::value_type;
    const std::size_t vn = Full ? VB : vn_;
    const std::size_t nn = Full ? NB : nn_;
    T acc[VB][NB];
    for (std::size_t v = 0; v < vn; ++v) {
        for (std::size_t n = 0; n < nn; ++n) {
            acc[v][n] = zero_init ? T(0) : c[(v0 + v) * ldc + n0 + n];
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        const T* b = brow(k) + n0;
        T av[VB];
        for (std::size_t v = 0; v < vn; ++v) {
            av[v] = a(v0 + v, k);
        }
        for (std::size_t v = 0; v < vn; ++v) {
            for (std::size_t n = 0; n < nn; ++n) {
                acc[v][n] = T(ar.r(acc[v][n] + T(ar.r(b[n] * av[v]))));
            }
        }
    }
    for (std::size_t v = 0; v < vn; ++v) {
        for (std::size_t n = 0; n < nn; ++n) {
            c[(v0 + v) * ldc + n0 + n] = acc[v][n];
        }
    }
}

typedef double Vec8d __attribute__((vector_size(64)));
typedef float Vec16f __attribute__((vector_size(64)));

// Same contract as product_block for the native formats, where rounding
// after each operation is what the hardware does anyway.
template <typename T, std::size_t VB, std::size_t NV, typename AFn, typename BFn>
void native_block(std::size_t v0, std::size_t n0, std::size_t K, const AFn& a, const BFn& brow, T* c,
                  std::size_t ldc, bool zero_init) {
    using vec = std::conditional_t<std::is_same_v<T, double>, Vec8d, Vec16f>;
    constexpr std::size_t L = 64 / sizeof(T);
    vec acc[VB][NV];
    for (std::size_t v = 0; v < VB; ++v) {
        for (std::size_t j = 0; j < NV; ++j) {
            if (zero_init) {
                acc[v][j] = vec{};
            } else {
                std::memcpy(&acc[v][j], c + (v0 + v) * ldc + n0 + j * L, sizeof(vec));
            }
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        const T* b = brow(k) + n0;
        vec bv[NV];
        for (std::size_t j = 0; j < NV; ++j) {
            std::memcpy(&bv[j], b + j * L, sizeof(vec));
        }
        for (std::size_t v = 0; v < VB; ++v) {
            const T s = a(v0 + v, k);
            for (std::size_t j = 0; j < NV; ++j) {
                acc[v][j] = acc[v][j] + bv[j] * s;
            }
        }
    }
    for (std::size_t v = 0; v < VB; ++v) {
        for (std::size_t j = 0; j < NV; ++j) {
            std::memcpy(c + (v0 + v) * ldc + n0 + j * L, &acc[v][j], sizeof(vec));
        }
    }
}

template <typename Arith, typename AFn, typename BFn>
void accumulate_products(const Arith& ar, std::size_t V, std::size_t N, std::size_t K, const AFn& a,
                         const BFn& brow, typename Arith::value_type* c, std::size_t ldc, bool zero_init) {
    using T = typename Arith::value_type;
    constexpr std::size_t VB = 8;
    constexpr std::size_t NB = 128 / sizeof(T);
    for (std::size_t v0 = 0; v0 < V; v0 += VB) {
        const std::size_t vn = std::min(VB, V - v0);
        for (std::size_t n0 = 0; n0 < N; n0 += NB) {
            const std::size_t nn = std::min(NB, N - n0);
            if constexpr (std::is_same_v<Arith, Fp64Arith> || std::is_same_v<Arith, Fp32Arith>) {
                if (vn == VB && nn == NB) {
                    native_block<T, VB, NB * sizeof(T) / 64>(v0, n0, K, a, brow, c, ldc, zero_init);
                    continue;
                }
            }
            if (vn == VB && nn == NB) {
                product_block<VB, NB, true>(ar, v0, VB, n0, NB, K, a, brow, c, ldc, zero_init);
            } else {
                product_block<VB, NB, false>(ar, v0, vn, n0, nn, K, a, brow, c, ldc, zero_init);
            }
        }
    }
}

}  // namespace

struct JetKernel::Impl {
    virtual ~Impl() = default;
    virtual void forward(std::span<const Point> points, JetBatch& out) = 0;
    virtual void backward(const JetBatch& seeds) = 0;
    virtual void reset_gradient() = 0;
    virtual std::vector<double> gradient() const = 0;
};

namespace {

template <typename Arith>
class KernelImpl final : public JetKernel::Impl {
    using T = typename Arith::value_type;

public:
    KernelImpl(const MlpParams& params, const JetComponents& comps, Arith arith)
        : ar_(arith), comps_(component_list(comps)), shapes_(params.layers().begin(), params.layers().end()) {
        const auto flat = params.flat();
        weights_.resize(flat.size());
        for (std::size_t k = 0; k < flat.size(); ++k) {
            weights_[k] = T(ar_.r(flat[k]));
        }
        // Transposed hidden weights for the forward sweep (vectorised over
        // output neurons).
        transposed_.resize(shapes_.size() - 1);
        for (std::size_t l = 0; l + 1 < shapes_.size(); ++l) {
            const auto& s = shapes_[l];
            auto& wt = transposed_[l];
            wt.resize(std::size_t(s.in) * std::size_t(s.out));
            for (int i = 0; i < s.out; ++i) {
                for (int j = 0; j < s.in; ++j) {
                    wt[std::size_t(j) * std::size_t(s.out) + std::size_t(i)] =
                        weights_[s.weight_offset + std::size_t(i) * std::size_t(s.in) + std::size_t(j)];
                }
            }
        }
        grad_.assign(flat.size(), T(0));
    }

    void forward(std::span<const Point> points, JetBatch& out) override {
        const std::size_t P = points.size();
        const std::size_t C = comps_.size();
        const std::size_t hidden = shapes_.size() - 1;
        npoints_ = P;
        allocate(P);

        // Layer-0 input jets: value (x, t), d/dx (1, 0), d/dt (0, 1), second
        // order zero.
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t p = 0; p < P; ++p) {
                T* in = &input_[(c * P + p) * 2];
                switch (comps_[c].kind) {
                case Kind::value:
                    in[0] = T(ar_.r(points[p].x));
                    in[1] = T(ar_.r(points[p].t));
                    break;
                case Kind::dx: in[0] = T(1); in[1] = T(0); break;
                case Kind::dt: in[0] = T(0); in[1] = T(1); break;
                default: in[0] = T(0); in[1] = T(0); break;
                }
            }
        }

        for (std::size_t l = 0; l < hidden; ++l) {
            const auto& s = shapes_[l];
            const std::size_t nin = std::size_t(s.in);
            const std::size_t W = std::size_t(s.out);
            const T* prev = l == 0 ? input_.data() : act_[l - 1].data();
            const T* wt = transposed_[l].data();
            const T* bias = &weights_[s.bias_offset];
            T* z_all = pre_[l].data();
            T* a_all = act_[l].data();
            T* slope = slope_[l].data();
            accumulate_products(
                ar_, C * P, W, nin, [&](std::size_t v, std::size_t j) { return prev[v * nin + j]; },
                [&](std::size_t j) { return wt + j * W; }, z_all, W, true);
            for (std::size_t p = 0; p < P; ++p) {
                T* z = z_all + p * W;
                for (std::size_t i = 0; i < W; ++i) {
                    z[i] = T(ar_.r(z[i] + bias[i]));
                }
            }
            for (std::size_t p = 0; p < P; ++p) {
                const T* z0 = z_all + p * W;
                T* h = a_all + p * W;
                T* sl = slope + p * W;
                for (std::size_t i = 0; i < W; ++i) {
                    h[i] = ar_.tanh(z0[i]);
                }
                for (std::size_t i = 0; i < W; ++i) {
                    sl[i] = T(ar_.r(T(1) - T(ar_.r(h[i] * h[i]))));
                }
                for (std::size_t c = 1; c < C; ++c) {
                    const T* zc = z_all + (c * P + p) * W;
                    T* ac = a_all + (c * P + p) * W;
                    if (comps_[c].first_order < 0) {
                        for (std::size_t i = 0; i < W; ++i) {
                            ac[i] = T(ar_.r(sl[i] * zc[i]));
                        }
                    } else {
                        const T* zd = z_all + (std::size_t(comps_[c].first_order) * P + p) * W;
                        for (std::size_t i = 0; i < W; ++i) {
                            const T hs = T(ar_.r(h[i] * sl[i]));
                            const T q = T(ar_.r(zd[i] * zd[i]));
                            const T curv = T(ar_.r(T(ar_.r(T(2) * hs)) * q));
                            ac[i] = T(ar_.r(T(ar_.r(sl[i] * zc[i])) - curv));
                        }
                    }
                }
            }
        }

        // Linear output unit.
        const auto& so = shapes_.back();
        const std::size_t nin = std::size_t(so.in);
        const T* w = &weights_[so.weight_offset];
        const T b = weights_[so.bias_offset];
        const T* last = act_[hidden - 1].data();
        out.resize(P, normalized_components());
        for (std::size_t c = 0; c < C; ++c) {
            auto& slot = *batch_slot(out, comps_[c].kind);
            for (std::size_t p = 0; p < P; ++p) {
                const T* a = last + (c * P + p) * nin;
                T acc = T(0);
                for (std::size_t j = 0; j < nin; ++j) {
                    acc = T(ar_.r(acc + T(ar_.r(w[j] * a[j]))));
                }
                if (c == 0) {
                    acc = T(ar_.r(acc + b));
                }
                slot[p] = double(acc);
            }
        }
    }

    void backward(const JetBatch& seeds) override {
        const std::size_t P = npoints_;
        const std::size_t C = comps_.size();
        const std::size_t hidden = shapes_.size() - 1;
        if (seeds.size() != P) {
            throw std::invalid_argument("jet kernel: seed batch does not match the last forward pass");
        }
        order_.resize(P * C);
        for (std::size_t p = 0; p < P; ++p) {
            for (std::size_t c = 0; c < C; ++c) {
                order_[p * C + c] = c * P + p;
            }
        }

        // Output unit.
        {
            const auto& so = shapes_.back();
            const std::size_t nin = std::size_t(so.in);
            const T* w = &weights_[so.weight_offset];
            T* gw = &grad_[so.weight_offset];
            T& gb = grad_[so.bias_offset];
            const T* last = act_[hidden - 1].data();
            for (std::size_t p = 0; p < P; ++p) {
                for (std::size_t c = 0; c < C; ++c) {
                    const T g = T(ar_.r((*batch_slot(seeds, comps_[c].kind))[p]));
                    const T* a = last + (c * P + p) * nin;
                    for (std::size_t j = 0; j < nin; ++j) {
                        gw[j] = T(ar_.r(gw[j] + T(ar_.r(g * a[j]))));
                    }
                    if (c == 0) {
                        gb = T(ar_.r(gb + g));
                    }
                    T* ab = abar_.data() + (c * P + p) * nin;
                    for (std::size_t j = 0; j < nin; ++j) {
                        ab[j] = T(ar_.r(w[j] * g));
                    }
                }
            }
        }

        for (std::size_t l = hidden; l-- > 0;) {
            const auto& s = shapes_[l];
            const std::size_t nin = std::size_t(s.in);
            const std::size_t W = std::size_t(s.out);
            const T* prev = l == 0 ? input_.data() : act_[l - 1].data();
            const T* w = &weights_[s.weight_offset];
            T* gw = &grad_[s.weight_offset];
            T* gb = &grad_[s.bias_offset];
            const T* z_all = pre_[l].data();
            const T* a_all = act_[l].data();
            const T* slope = slope_[l].data();
            for (std::size_t p = 0; p < P; ++p) {
                const T* h = a_all + p * W;
                const T* sl = slope + p * W;
                for (std::size_t i = 0; i < W; ++i) {
                    m2hs_[i] = T(ar_.r(T(-2) * T(ar_.r(h[i] * sl[i]))));
                }
                // Reverse of the activation step.
                const T* ab0 = abar_.data() + p * W;
                T* zb0 = zbar_.data() + p * W;
                for (std::size_t i = 0; i < W; ++i) {
                    zb0[i] = T(ar_.r(ab0[i] * sl[i]));
                }
                for (std::size_t c = 1; c < C; ++c) {
                    const T* abc = abar_.data() + (c * P + p) * W;
                    T* zbc = zbar_.data() + (c * P + p) * W;
                    for (std::size_t i = 0; i < W; ++i) {
                        zbc[i] = T(ar_.r(abc[i] * sl[i]));
                    }
                }
                for (std::size_t c = 1; c < C; ++c) {
                    if (comps_[c].first_order >= 0) {
                        continue;
                    }
                    const T* abc = abar_.data() + (c * P + p) * W;
                    const T* zc = z_all + (c * P + p) * W;
                    for (std::size_t i = 0; i < W; ++i) {
                        zb0[i] = T(ar_.r(zb0[i] + T(ar_.r(abc[i] * T(ar_.r(m2hs_[i] * zc[i]))))));
                    }
                }
                for (std::size_t c = 1; c < C; ++c) {
                    const int d = comps_[c].first_order;
                    if (d < 0) {
                        continue;
                    }
                    const T* abc = abar_.data() + (c * P + p) * W;
                    const T* zdd = z_all + (c * P + p) * W;
                    const T* zd = z_all + (std::size_t(d) * P + p) * W;
                    T* zbd = zbar_.data() + (std::size_t(d) * P + p) * W;
                    for (std::size_t i = 0; i < W; ++i) {
                        zbd[i] = T(ar_.r(zbd[i] + T(ar_.r(abc[i] * T(ar_.r(T(ar_.r(T(2) * m2hs_[i])) * zd[i]))))));
                    }
                    for (std::size_t i = 0; i < W; ++i) {
                        const T hh = T(ar_.r(h[i] * h[i]));
                        const T k = T(ar_.r(sl[i] * T(ar_.r(sl[i] - T(ar_.r(T(2) * hh))))));
                        const T q = T(ar_.r(zd[i] * zd[i]));
                        const T coef = T(ar_.r(T(ar_.r(m2hs_[i] * zdd[i])) - T(ar_.r(T(ar_.r(T(2) * k)) * q))));
                        zb0[i] = T(ar_.r(zb0[i] + T(ar_.r(abc[i] * coef))));
                    }
                }
            }

            // Reverse of the affine map. Weight gradients sum over points
            // first, then components, matching a point-at-a-time sweep.
            const T* zbar = zbar_.data();
            const std::size_t* order = order_.data();
            accumulate_products(
                ar_, W, nin, P * C, [&](std::size_t i, std::size_t k) { return zbar[order[k] * W + i]; },
                [&](std::size_t k) { return prev + order[k] * nin; }, gw, nin, false);
            for (std::size_t p = 0; p < P; ++p) {
                for (std::size_t i = 0; i < W; ++i) {
                    gb[i] = T(ar_.r(gb[i] + zbar[p * W + i]));
                }
            }
            if (l > 0) {
                accumulate_products(
                    ar_, C * P, nin, W, [&](std::size_t v, std::size_t i) { return zbar[v * W + i]; },
                    [&](std::size_t i) { return w + i * nin; }, abar_next_.data(), nin, true);
                abar_.swap(abar_next_);
            }
        }
    }

    void reset_gradient() override { std::fill(grad_.begin(), grad_.end(), T(0)); }

    std::vector<double> gradient() const override { return {grad_.begin(), grad_.end()}; }

private:
    JetComponents normalized_components() const {
        JetComponents jc;
        for (const auto& c : comps_) {
            jc.dx |= c.kind == Kind::dx;
            jc.dt |= c.kind == Kind::dt;
            jc.dxx |= c.kind == Kind::dxx;
            jc.dtt |= c.kind == Kind::dtt;
        }
        return jc;
    }

    void allocate(std::size_t P) {
        const std::size_t C = comps_.size();
        const std::size_t hidden = shapes_.size() - 1;
        std::size_t widest = 2;
        for (const auto& s : shapes_) {
            widest = std::max(widest, std::size_t(s.out));
        }
        input_.resize(C * P * 2);
        pre_.resize(hidden);
        act_.resize(hidden);
        slope_.resize(hidden);
        for (std::size_t l = 0; l < hidden; ++l) {
            const std::size_t W = std::size_t(shapes_[l].out);
            pre_[l].resize(C * P * W);
            act_[l].resize(C * P * W);
            slope_[l].resize(P * W);
        }
        abar_.resize(C * P * widest);
        abar_next_.resize(C * P * widest);
        zbar_.resize(C * P * widest);
        m2hs_.resize(widest);
    }

    Arith ar_;
    std::vector<Component> comps_;
    std::vector<LayerShape> shapes_;
    std::vector<T> weights_;
    std::vector<std::vector<T>> transposed_;
    std::vector<T> grad_;
    std::size_t npoints_ = 0;

    std::vector<T> input_;
    std::vector<std::vector<T>> pre_, act_, slope_;
    std::vector<T> abar_, abar_next_, zbar_, m2hs_;
    std::vector<std::size_t> order_;  // point-major visiting order of (component, point) rows
};

}  // namespace

JetKernel::JetKernel(const MlpParams& params, JetComponents comps, PrecisionSpec precision)
    : comps_(comps.normalized()), precision_(precision) {
    dispatch_arith(precision, [&](auto arith) {
        impl_ = std::make_unique<KernelImpl<decltype(arith)>>(params, comps_, arith);
        return 0;
    });
}

JetKernel::~JetKernel() = default;
JetKernel::JetKernel(JetKernel&&) noexcept = default;
JetKernel& JetKernel::operator=(JetKernel&&) noexcept = default;

void JetKernel::forward(std::span<const Point> points, JetBatch& out) { impl_->forward(points, out); }
void JetKernel::backward(const JetBatch& seeds) { impl_->backward(seeds); }
void JetKernel::reset_gradient() { impl_->reset_gradient(); }
std::vector<double> JetKernel::gradient() const { return impl_->gradient(); }

std::vector<double> predict(const MlpParams& params, std::span<const Point> points, PrecisionSpec precision) {
    JetKernel kernel(params, {}, precision);
    JetBatch out;
    std::vector<double> values;
    values.reserve(points.size());
    constexpr std::size_t chunk = 512;
    for (std::size_t begin = 0; begin < points.size(); begin += chunk) {
        const auto n = std::min(chunk, points.size() - begin);
        kernel.forward(points.subspan(begin, n), out);
        values.insert(values.end(), out.u.begin(), out.u.end());
    }
    return values;
}

}  // namespace pinnlab

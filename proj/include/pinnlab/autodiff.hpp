#pragma once

// Scalar reverse-mode automatic differentiation on an append-only tape.
//
// Every node value is rounded through the tape's PrecisionSpec. The reverse
// pass can either produce plain adjoint numbers (adjoints/grad) or record the
// adjoint computation as new nodes on the same tape (grad_graph), which is
// what makes nested derivatives such as d/dtheta of u_xx possible.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "pinnlab/precision.hpp"

namespace pinnlab::ad {

enum class Op : std::uint8_t { constant, variable, add, sub, mul, div, pow_int, sin, cos, exp, tanh, neg };

struct Node {
    Op op = Op::constant;
    std::int32_t lhs = -1;
    std::int32_t rhs = -1;
    std::int32_t exponent = 0;  // pow_int only
    double value = 0.0;
};

class Tape;

/// Handle to a node. Cheap to copy; only valid while its tape is alive.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::int32_t index) : tape_(tape), index_(index) {}

    double value() const;
    std::int32_t index() const { return index_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::int32_t index_ = -1;
};

class Tape {
public:
    explicit Tape(PrecisionSpec precision = kFp64) : precision_(precision) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    const PrecisionSpec& precision() const { return precision_; }
    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::int32_t i) const { return nodes_[static_cast<std::size_t>(i)]; }

    Var constant(double v);
    Var variable(double v);
    Var unary(Op op, Var a);
    Var binary(Op op, Var a, Var b);
    Var pow_int(Var a, int exponent);

    /// Reverse sweep producing numeric adjoints d(output)/d(node) for every
    /// node up to output; arithmetic rounded through the tape precision.
    std::vector<double> adjoints(Var output) const;
    std::vector<double> grad(Var output, std::span<const Var> wrt) const;

    /// Reverse sweep recorded onto this tape. The returned handles are
    /// differentiable again. Variables the output does not depend on get a
    /// zero constant.
    std::vector<Var> grad_graph(Var output, std::span<const Var> wrt);

    /// Drops every node; outstanding handles become dangling.
    void clear() { nodes_.clear(); }

    /// Overwrites a leaf value; call replay() afterwards.
    void set_leaf(Var leaf, double v);
    /// Recomputes every non-leaf value in tape order.
    void replay();

private:
    double r(double v) const { return round_to(precision_, v); }
    double evaluate(const Node& n) const;
    Var push(Node n);

    PrecisionSpec precision_;
    std::vector<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var sin(Var a);
Var cos(Var a);
Var exp(Var a);
Var tanh(Var a);
Var pow(Var a, int exponent);

/// d^order y / d wrt^order by nesting grad_graph. Orders 1 and 2 only.
Var derivative(Var y, Var wrt, int order = 1);

enum class InputDerivative { dx, dt, dxx, dtt };

/// A recorded expression together with its leaves.
struct Recording {
    std::unique_ptr<Tape> tape;
    std::vector<Var> inputs;
    std::vector<Var> params;
    Var output;
};

using ExpressionBuilder =
    std::function<Var(Tape&, std::span<const Var> inputs, std::span<const Var> params)>;

Recording record(const ExpressionBuilder& f, std::span<const double> inputs,
                 std::span<const double> params, PrecisionSpec precision = kFp64);

/// Network-as-function: u(x, t; params) built on a tape.
using FieldBuilder = std::function<Var(Tape&, Var x, Var t, std::span<const Var> params)>;

struct InputDerivativeResult {
    double value = 0.0;
    std::vector<double> param_grad;  ///< d(value)/d(params), third order for dxx/dtt
};

/// Records u at (x, t), differentiates w.r.t. the requested input (nested for
/// second order) and back-propagates the result to the parameters.
InputDerivativeResult input_derivative(const FieldBuilder& u, double x, double t, InputDerivative which,
                                       std::span<const double> params, PrecisionSpec precision = kFp64);

}  // namespace pinnlab::ad

#include "pinnlab/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace pinnlab::ad {

namespace {

bool is_unary(Op op) {
    return op == Op::sin || op == Op::cos || op == Op::exp || op == Op::tanh || op == Op::neg;
}

bool is_binary(Op op) { return op == Op::add || op == Op::sub || op == Op::mul || op == Op::div; }

Tape& common_tape(Var a, Var b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
        throw std::invalid_argument("autodiff: operands belong to different tapes");
    }
    return *a.tape();
}

}  // namespace

double Var::value() const { return tape_->node(index_).value; }

Var Tape::push(Node n) {
    n.value = evaluate(n);
    nodes_.push_back(n);
    return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

double Tape::evaluate(const Node& n) const {
    const auto arg = [&](std::int32_t i) { return nodes_[static_cast<std::size_t>(i)].value; };
    switch (n.op) {
    case Op::constant:
    case Op::variable: return n.value;
    case Op::add: return r(arg(n.lhs) + arg(n.rhs));
    case Op::sub: return r(arg(n.lhs) - arg(n.rhs));
    case Op::mul: return r(arg(n.lhs) * arg(n.rhs));
    case Op::div: return r(arg(n.lhs) / arg(n.rhs));
    case Op::neg: return -arg(n.lhs);
    case Op::sin: return r(std::sin(arg(n.lhs)));
    case Op::cos: return r(std::cos(arg(n.lhs)));
    case Op::exp: return r(std::exp(arg(n.lhs)));
    case Op::tanh: return r(std::tanh(arg(n.lhs)));
    case Op::pow_int: {
        // Repeated multiplication keeps round-after-op semantics.
        double acc = 1.0;
        const double base = arg(n.lhs);
        for (int k = 0; k < n.exponent; ++k) {
            acc = r(acc * base);
        }
        return acc;
    }
    }
    throw std::logic_error("autodiff: corrupt node");
}

Var Tape::constant(double v) {
    Node n;
    n.op = Op::constant;
    n.value = r(v);
    return push(n);
}

Var Tape::variable(double v) {
    Node n;
    n.op = Op::variable;
    n.value = r(v);
    return push(n);
}

Var Tape::unary(Op op, Var a) {
    if (!is_unary(op)) {
        throw std::invalid_argument("autodiff: operation is not a supported unary primitive");
    }
    if (a.tape() != this) {
        throw std::invalid_argument("autodiff: operand belongs to a different tape");
    }
    Node n;
    n.op = op;
    n.lhs = a.index();
    return push(n);
}

Var Tape::binary(Op op, Var a, Var b) {
    if (!is_binary(op)) {
        throw std::invalid_argument("autodiff: operation is not a supported binary primitive");
    }
    if (a.tape() != this || b.tape() != this) {
        throw std::invalid_argument("autodiff: operand belongs to a different tape");
    }
    Node n;
    n.op = op;
    n.lhs = a.index();
    n.rhs = b.index();
    return push(n);
}

Var Tape::pow_int(Var a, int exponent) {
    if (exponent < 0) {
        throw std::invalid_argument("autodiff: pow_int needs a non-negative exponent");
    }
    if (a.tape() != this) {
        throw std::invalid_argument("autodiff: operand belongs to a different tape");
    }
    Node n;
    n.op = Op::pow_int;
    n.lhs = a.index();
    n.exponent = exponent;
    return push(n);
}

std::vector<double> Tape::adjoints(Var output) const {
    const auto last = static_cast<std::size_t>(output.index());
    std::vector<double> adj(last + 1, 0.0);
    adj[last] = 1.0;
    const auto accumulate = [&](std::int32_t i, double contribution) {
        auto& slot = adj[static_cast<std::size_t>(i)];
        slot = r(slot + contribution);
    };
    for (std::size_t i = last + 1; i-- > 0;) {
        const double g = adj[i];
        if (g == 0.0) {
            continue;
        }
        const Node& n = nodes_[i];
        const double v = n.value;
        const auto arg = [&](std::int32_t k) { return nodes_[static_cast<std::size_t>(k)].value; };
        switch (n.op) {
        case Op::constant:
        case Op::variable: break;
        case Op::add:
            accumulate(n.lhs, g);
            accumulate(n.rhs, g);
            break;
        case Op::sub:
            accumulate(n.lhs, g);
            accumulate(n.rhs, -g);
            break;
        case Op::mul:
            accumulate(n.lhs, r(g * arg(n.rhs)));
            accumulate(n.rhs, r(g * arg(n.lhs)));
            break;
        case Op::div:
            accumulate(n.lhs, r(g / arg(n.rhs)));
            accumulate(n.rhs, -r(r(g * v) / arg(n.rhs)));
            break;
        case Op::neg: accumulate(n.lhs, -g); break;
        case Op::sin: accumulate(n.lhs, r(g * r(std::cos(arg(n.lhs))))); break;
        case Op::cos: accumulate(n.lhs, -r(g * r(std::sin(arg(n.lhs))))); break;
        case Op::exp: accumulate(n.lhs, r(g * v)); break;
        case Op::tanh: accumulate(n.lhs, r(g * r(1.0 - r(v * v)))); break;
        case Op::pow_int: {
            if (n.exponent == 0) {
                break;
            }
            double lower = 1.0;
            for (int k = 0; k < n.exponent - 1; ++k) {
                lower = r(lower * arg(n.lhs));
            }
            accumulate(n.lhs, r(g * r(double(n.exponent) * lower)));
            break;
        }
        }
    }
    return adj;
}

std::vector<double> Tape::grad(Var output, std::span<const Var> wrt) const {
    const auto adj = adjoints(output);
    std::vector<double> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        const auto i = static_cast<std::size_t>(w.index());
        out.push_back(i < adj.size() ? adj[i] : 0.0);
    }
    return out;
}

std::vector<Var> Tape::grad_graph(Var output, std::span<const Var> wrt) {
    const auto last = static_cast<std::size_t>(output.index());
    std::vector<Var> adj(last + 1);
    adj[last] = constant(1.0);
    const auto accumulate = [&](std::int32_t i, Var contribution) {
        auto& slot = adj[static_cast<std::size_t>(i)];
        slot = slot.valid() ? slot + contribution : contribution;
    };
    // Nodes appended during the sweep have indices > last and are never
    // visited; the sweep only reads nodes_[0..last].
    for (std::size_t i = last + 1; i-- > 0;) {
        if (!adj[i].valid()) {
            continue;
        }
        const Var g = adj[i];
        const Node n = nodes_[i];
        const Var self(this, static_cast<std::int32_t>(i));
        const Var a(this, n.lhs);
        const Var b(this, n.rhs);
        switch (n.op) {
        case Op::constant:
        case Op::variable: break;
        case Op::add:
            accumulate(n.lhs, g);
            accumulate(n.rhs, g);
            break;
        case Op::sub:
            accumulate(n.lhs, g);
            accumulate(n.rhs, -g);
            break;
        case Op::mul:
            accumulate(n.lhs, g * b);
            accumulate(n.rhs, g * a);
            break;
        case Op::div:
            accumulate(n.lhs, g / b);
            accumulate(n.rhs, -((g * self) / b));
            break;
        case Op::neg: accumulate(n.lhs, -g); break;
        case Op::sin: accumulate(n.lhs, g * cos(a)); break;
        case Op::cos: accumulate(n.lhs, -(g * sin(a))); break;
        case Op::exp: accumulate(n.lhs, g * self); break;
        case Op::tanh: accumulate(n.lhs, g * (1.0 - self * self)); break;
        case Op::pow_int:
            if (n.exponent != 0) {
                accumulate(n.lhs, g * (double(n.exponent) * pow(a, n.exponent - 1)));
            }
            break;
        }
    }
    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        const auto i = static_cast<std::size_t>(w.index());
        out.push_back(i < adj.size() && adj[i].valid() ? adj[i] : constant(0.0));
    }
    return out;
}

void Tape::set_leaf(Var leaf, double v) {
    Node& n = nodes_.at(static_cast<std::size_t>(leaf.index()));
    if (n.op != Op::variable && n.op != Op::constant) {
        throw std::invalid_argument("autodiff: set_leaf on an interior node");
    }
    n.value = r(v);
}

void Tape::replay() {
    for (auto& n : nodes_) {
        n.value = evaluate(n);
    }
}

Var operator+(Var a, Var b) { return common_tape(a, b).binary(Op::add, a, b); }
Var operator-(Var a, Var b) { return common_tape(a, b).binary(Op::sub, a, b); }
Var operator*(Var a, Var b) { return common_tape(a, b).binary(Op::mul, a, b); }
Var operator/(Var a, Var b) { return common_tape(a, b).binary(Op::div, a, b); }
Var operator-(Var a) { return a.tape()->unary(Op::neg, a); }
Var operator+(Var a, double b) { return a + a.tape()->constant(b); }
Var operator+(double a, Var b) { return b.tape()->constant(a) + b; }
Var operator-(Var a, double b) { return a - a.tape()->constant(b); }
Var operator-(double a, Var b) { return b.tape()->constant(a) - b; }
Var operator*(Var a, double b) { return a * a.tape()->constant(b); }
Var operator*(double a, Var b) { return b.tape()->constant(a) * b; }
Var operator/(Var a, double b) { return a / a.tape()->constant(b); }
Var operator/(double a, Var b) { return b.tape()->constant(a) / b; }
Var sin(Var a) { return a.tape()->unary(Op::sin, a); }
Var cos(Var a) { return a.tape()->unary(Op::cos, a); }
Var exp(Var a) { return a.tape()->unary(Op::exp, a); }
Var tanh(Var a) { return a.tape()->unary(Op::tanh, a); }
Var pow(Var a, int exponent) { return a.tape()->pow_int(a, exponent); }

Var derivative(Var y, Var wrt, int order) {
    if (order < 1 || order > 2) {
        throw std::invalid_argument("autodiff: input derivatives of order " + std::to_string(order) +
                                    " are unsupported");
    }
    Tape& tape = *y.tape();
    const Var wrt_one[] = {wrt};
    Var d = tape.grad_graph(y, wrt_one)[0];
    if (order == 2) {
        d = tape.grad_graph(d, wrt_one)[0];
    }
    return d;
}

Recording record(const ExpressionBuilder& f, std::span<const double> inputs, std::span<const double> params,
                 PrecisionSpec precision) {
    Recording rec;
    rec.tape = std::make_unique<Tape>(precision);
    for (double v : inputs) {
        rec.inputs.push_back(rec.tape->variable(v));
    }
    for (double v : params) {
        rec.params.push_back(rec.tape->variable(v));
    }
    rec.output = f(*rec.tape, rec.inputs, rec.params);
    if (!rec.output.valid() || rec.output.tape() != rec.tape.get()) {
        throw std::invalid_argument("autodiff: expression builder returned a foreign node");
    }
    return rec;
}

InputDerivativeResult input_derivative(const FieldBuilder& u, double x, double t, InputDerivative which,
                                       std::span<const double> params, PrecisionSpec precision) {
    Tape tape(precision);
    const Var xv = tape.variable(x);
    const Var tv = tape.variable(t);
    std::vector<Var> theta;
    theta.reserve(params.size());
    for (double p : params) {
        theta.push_back(tape.variable(p));
    }
    const Var out = u(tape, xv, tv, theta);
    Var d;
    switch (which) {
    case InputDerivative::dx: d = derivative(out, xv, 1); break;
    case InputDerivative::dt: d = derivative(out, tv, 1); break;
    case InputDerivative::dxx: d = derivative(out, xv, 2); break;
    case InputDerivative::dtt: d = derivative(out, tv, 2); break;
    }
    return {d.value(), tape.grad(d, theta)};
}

}  // namespace pinnlab::ad

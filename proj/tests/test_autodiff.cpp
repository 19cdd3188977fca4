#include <bit>
#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "pinnlab/autodiff.hpp"
#include "pinnlab/model.hpp"
#include "pinnlab/rng.hpp"
#include "oracles.hpp"

using namespace pinnlab;
using ad::Tape;
using ad::Var;
using namespace pinnlab::oracle;

namespace {

double mlp_u(const MlpParams& shape, std::span<const double> theta, double x, double t) {
    MlpParams p = shape;
    p.assign(theta);
    return forward(p, x, t);
}

ad::FieldBuilder mlp_field(const MlpParams& shape) {
    return [shape](Tape& tape, Var x, Var t, std::span<const Var> theta) { return forward(shape, tape, x, t, theta); };
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("record examples") {
    const double three[] = {3.0};
    auto id = ad::record([](Tape&, std::span<const Var> in, std::span<const Var>) { return in[0]; }, three, {});
    CHECK(id.output.value() == 3.0);

    const double zero[] = {0.0};
    auto s = ad::record([](Tape&, std::span<const Var> in, std::span<const Var>) { return ad::sin(in[0]); }, zero, {});
    CHECK(s.output.value() == 0.0);

    const double half[] = {0.5};
    auto f = ad::record(
        [](Tape&, std::span<const Var> in, std::span<const Var>) { return ad::tanh(in[0]) + in[0] * in[0]; }, half, {});
    CHECK(f.output.value() == std::tanh(0.5) + 0.25);
}

TEST_CASE("grad examples") {
    Tape tape;
    const Var a = tape.variable(1.0);
    const Var b = tape.variable(2.0);
    const Var wrt[] = {a, b};
    const auto zero = tape.grad(tape.constant(4.0), wrt);
    CHECK(zero == std::vector<double>{0.0, 0.0});
    const auto g = tape.grad(a * a + b * b, wrt);
    CHECK(g == std::vector<double>{2.0, 4.0});
}

TEST_CASE("random expressions match central differences") {
    Rng rng(99);
    constexpr int n = 3;
    int tested = 0;
    double worst = 0.0;
    while (tested < 100) {
        auto e = random_expr(rng, 4, n);
        if (!depends_on_leaves(*e)) {
            continue;
        }
        std::vector<double> theta(n);
        for (auto& v : theta) v = rng.uniform(-1.0, 1.0);

        Tape tape;
        std::vector<Var> vars;
        for (double v : theta) vars.push_back(tape.variable(v));
        const Var out = e->eval<Var>(vars, [&](double c) { return tape.constant(c); });
        const auto g = tape.grad(out, vars);

        const auto plain = [&](std::span<const double> th) { return e->eval<double>(th, [](double c) { return c; }); };
        CHECK(out.value() == doctest::Approx(plain(theta)).epsilon(1e-14));
        std::vector<double> fd(n);
        for (int i = 0; i < n; ++i) {
            const double h = 1e-6 * std::max(1.0, std::fabs(theta[std::size_t(i)]));
            auto up = theta;
            auto dn = theta;
            up[std::size_t(i)] += h;
            dn[std::size_t(i)] -= h;
            fd[std::size_t(i)] = (plain(up) - plain(dn)) / (up[std::size_t(i)] - dn[std::size_t(i)]);
        }
        if (norm2(fd) < 1e-3) {
            continue;  // flat spot: relative error is meaningless there
        }
        const double err = rel_err(g, fd);
        worst = std::max(worst, err);
        CHECK(err <= 1e-6);
        ++tested;
    }
    MESSAGE("worst relative error " << worst);
}

TEST_CASE("2-16-16-1 network parameter gradient matches central differences") {
    const MlpParams params = init_mlp(4, 2, 16);
    Rng rng(8);
    for (int trial = 0; trial < 3; ++trial) {
        const double x = rng.uniform(-1.0, 1.0);
        const double t = rng.uniform(0.0, 1.0);
        Tape tape;
        const Var xv = tape.variable(x);
        const Var tv = tape.variable(t);
        std::vector<Var> theta;
        for (double v : params.flat()) theta.push_back(tape.variable(v));
        const Var u = forward(params, tape, xv, tv, theta);
        // u^2 keeps the objective loss-shaped.
        const auto g = tape.grad(u * u, theta);

        std::vector<double> fd(params.size());
        std::vector<double> th(params.flat().begin(), params.flat().end());
        for (std::size_t i = 0; i < th.size(); ++i) {
            const double h = 1e-6 * std::max(1.0, std::fabs(th[i]));
            auto up = th;
            auto dn = th;
            up[i] += h;
            dn[i] -= h;
            const double fu = mlp_u(params, up, x, t);
            const double fdn = mlp_u(params, dn, x, t);
            fd[i] = (fu * fu - fdn * fdn) / (up[i] - dn[i]);
        }
        CHECK(rel_err(g, fd) <= 1e-6);
    }
}

TEST_CASE("input derivative examples") {
    const ad::FieldBuilder cube = [](Tape&, Var x, Var, std::span<const Var>) { return ad::pow(x, 3); };
    CHECK(ad::input_derivative(cube, 2.0, 0.0, ad::InputDerivative::dxx, {}).value == doctest::Approx(12.0).epsilon(1e-15));
    CHECK(ad::input_derivative(cube, 2.0, 0.0, ad::InputDerivative::dx, {}).value == doctest::Approx(12.0).epsilon(1e-15));

    const ad::FieldBuilder wave = [](Tape&, Var x, Var t, std::span<const Var>) { return ad::sin(x - 50.0 * t); };
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(0.0, 6.3);
        const double t = rng.uniform(0.0, 1.0);
        const double ut = ad::input_derivative(wave, x, t, ad::InputDerivative::dt, {}).value;
        const double ux = ad::input_derivative(wave, x, t, ad::InputDerivative::dx, {}).value;
        CHECK(std::fabs(ut + 50.0 * ux) <= 1e-12);
    }
}

TEST_CASE("order above two is rejected") {
    Tape tape;
    const Var x = tape.variable(1.0);
    const Var y = x * x * x;
    CHECK_THROWS_AS(ad::derivative(y, x, 3), std::invalid_argument);
    CHECK_THROWS_AS(ad::derivative(y, x, 0), std::invalid_argument);
}

TEST_CASE("network second input derivatives match second-order differences") {
    const MlpParams params = init_mlp(12, 2, 16);
    const auto u = mlp_field(params);
    Rng rng(21);
    const double h = 1e-4;
    std::vector<double> got_xx, fd_xx, got_tt, fd_tt;
    for (int i = 0; i < 20; ++i) {
        const double x = rng.uniform(-1.0, 1.0);
        const double t = rng.uniform(0.0, 1.0);
        got_xx.push_back(ad::input_derivative(u, x, t, ad::InputDerivative::dxx, params.flat()).value);
        got_tt.push_back(ad::input_derivative(u, x, t, ad::InputDerivative::dtt, params.flat()).value);
        const double c = forward(params, x, t);
        fd_xx.push_back((forward(params, x + h, t) - 2 * c + forward(params, x - h, t)) / (h * h));
        fd_tt.push_back((forward(params, x, t + h) - 2 * c + forward(params, x, t - h)) / (h * h));
    }
    CHECK(rel_err(got_xx, fd_xx) <= 1e-4);
    CHECK(rel_err(got_tt, fd_tt) <= 1e-4);
}

TEST_CASE("third-order mixed derivative d/dtheta u_xx matches differences of u_xx") {
    const MlpParams params = init_mlp(3, 1, 6);
    const auto u = mlp_field(params);
    const double x = 0.3, t = 0.6;
    const auto res = ad::input_derivative(u, x, t, ad::InputDerivative::dxx, params.flat());
    std::vector<double> th(params.flat().begin(), params.flat().end());
    std::vector<double> fd(th.size());
    for (std::size_t i = 0; i < th.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::fabs(th[i]));
        auto up = th;
        auto dn = th;
        up[i] += h;
        dn[i] -= h;
        fd[i] = (ad::input_derivative(u, x, t, ad::InputDerivative::dxx, up).value -
                 ad::input_derivative(u, x, t, ad::InputDerivative::dxx, dn).value) /
                (up[i] - dn[i]);
    }
    CHECK(rel_err(res.param_grad, fd) <= 1e-6);
}

TEST_CASE("nested first derivatives equal the second-order path") {
    const MlpParams params = init_mlp(5, 2, 8);
    Rng rng(2);
    for (int i = 0; i < 10; ++i) {
        Tape tape;
        const Var x = tape.variable(rng.uniform(-1.0, 1.0));
        const Var t = tape.variable(rng.uniform(0.0, 1.0));
        std::vector<Var> theta;
        for (double v : params.flat()) theta.push_back(tape.constant(v));
        const Var u = forward(params, tape, x, t, theta);
        const Var nested = ad::derivative(ad::derivative(u, x, 1), x, 1);
        const Var direct = ad::derivative(u, x, 2);
        CHECK(nested.value() == doctest::Approx(direct.value()).epsilon(1e-10));
    }
}

TEST_CASE("gradient is linear in the objective") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        auto ef = random_expr(rng, 3, 2);
        auto eg = random_expr(rng, 3, 2);
        const double a = rng.uniform(-2.0, 2.0);
        const double b = rng.uniform(-2.0, 2.0);
        Tape tape;
        std::vector<Var> v = {tape.variable(rng.uniform(-1, 1)), tape.variable(rng.uniform(-1, 1))};
        const auto lift = [&](double c) { return tape.constant(c); };
        const Var f = ef->eval<Var>(v, lift);
        const Var g = eg->eval<Var>(v, lift);
        const auto gf = tape.grad(f, v);
        const auto gg = tape.grad(g, v);
        const auto gc = tape.grad(a * f + b * g, v);
        for (std::size_t i = 0; i < 2; ++i) {
            const double want = a * gf[i] + b * gg[i];
            const double scale = std::max({std::fabs(a * gf[i]), std::fabs(b * gg[i]), 1e-300});
            CHECK(std::fabs(gc[i] - want) <= 4 * 0x1p-52 * scale);
        }
    }
}

TEST_CASE("narrow-format tapes round every node and replay bit-identically") {
    const MlpParams params = init_mlp(9, 2, 8, kBf16);
    Tape tape(kBf16);
    const Var x = tape.variable(0.37);
    const Var t = tape.variable(0.81);
    std::vector<Var> theta;
    for (double v : params.flat()) theta.push_back(tape.variable(v));
    const Var u = forward(params, tape, x, t, theta);
    const Var uxx = ad::derivative(u, x, 2);
    for (std::size_t i = 0; i < tape.size(); ++i) {
        const double v = tape.node(std::int32_t(i)).value;
        REQUIRE(round_to(kBf16, v) == v);
    }
    const double first = uxx.value();
    const auto g1 = tape.grad(uxx, theta);
    tape.replay();
    CHECK(std::bit_cast<std::uint64_t>(uxx.value()) == std::bit_cast<std::uint64_t>(first));
    CHECK(tape.grad(uxx, theta) == g1);

    tape.set_leaf(x, 0.5);
    tape.replay();
    const double moved = uxx.value();
    tape.set_leaf(x, round_to(kBf16, 0.37));
    tape.replay();
    CHECK(std::bit_cast<std::uint64_t>(uxx.value()) == std::bit_cast<std::uint64_t>(first));
    CHECK(moved != first);
}

TEST_CASE("unsupported constructions are rejected") {
    Tape a;
    Tape b;
    const Var x = a.variable(1.0);
    const Var y = b.variable(2.0);
    CHECK_THROWS_AS(x + y, std::invalid_argument);
    CHECK_THROWS_AS(a.unary(ad::Op::add, x), std::invalid_argument);
    CHECK_THROWS_AS(a.binary(ad::Op::sin, x, x), std::invalid_argument);
    CHECK_THROWS_AS(ad::pow(x, -1), std::invalid_argument);
}

}  // TEST_SUITE

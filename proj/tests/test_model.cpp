#include <cmath>
#include <vector>

#include "doctest.h"
#include "pinnlab/model.hpp"
#include "pinnlab/rng.hpp"

using namespace pinnlab;

namespace {

// Straight matrix-vector evaluation over explicit weight matrices.
double reference_forward(const std::vector<std::vector<std::vector<double>>>& w,
                         const std::vector<std::vector<double>>& b, double x, double t) {
    std::vector<double> act = {x, t};
    for (std::size_t l = 0; l < w.size(); ++l) {
        std::vector<double> next(w[l].size());
        for (std::size_t i = 0; i < w[l].size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < act.size(); ++j) s += w[l][i][j] * act[j];
            s += b[l][i];
            next[i] = l + 1 < w.size() ? std::tanh(s) : s;
        }
        act = next;
    }
    return act[0];
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("parameter count") {
    CHECK(parameter_count(3, 512) == 527361);
    CHECK(MlpParams(3, 512).size() == 527361);
    CHECK(parameter_count(1, 4) == 4 * 2 + 4 + 4 + 1);
    CHECK(parameter_count(3, 64) == MlpParams(3, 64).size());
}

TEST_CASE("layer shapes compose and the flat layout is layer-major") {
    const MlpParams p(3, 5);
    const auto layers = p.layers();
    REQUIRE(layers.size() == 4);
    CHECK(layers.front().in == 2);
    CHECK(layers.back().out == 1);
    std::size_t cursor = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (l > 0) CHECK(layers[l].in == layers[l - 1].out);
        CHECK(layers[l].weight_offset == cursor);
        cursor += std::size_t(layers[l].in * layers[l].out);
        CHECK(layers[l].bias_offset == cursor);
        cursor += std::size_t(layers[l].out);
    }
    CHECK(cursor == p.size());
}

TEST_CASE("initialization is deterministic and respects the Xavier bound") {
    const MlpParams a = init_mlp(0, 1, 4);
    const MlpParams b = init_mlp(0, 1, 4);
    CHECK(std::vector<double>(a.flat().begin(), a.flat().end()) ==
          std::vector<double>(b.flat().begin(), b.flat().end()));
    const MlpParams other = init_mlp(1, 1, 4);
    CHECK(std::vector<double>(a.flat().begin(), a.flat().end()) !=
          std::vector<double>(other.flat().begin(), other.flat().end()));

    // Hidden layer: fan 2 + 4, bound 1. Output layer: fan 4 + 1.
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 2; ++j) CHECK(std::fabs(a.weight(0, i, j)) <= 1.0);
        CHECK(a.bias(0, i) == 0.0);
        CHECK(std::fabs(a.weight(1, 0, i)) <= std::sqrt(6.0 / 5.0));
    }
    CHECK(a.bias(1, 0) == 0.0);

    const MlpParams big = init_mlp(3, 3, 64);
    for (std::size_t l = 0; l < big.layers().size(); ++l) {
        const auto& s = big.layers()[l];
        const double bound = std::sqrt(6.0 / double(s.in + s.out));
        double max_w = 0.0;
        for (int i = 0; i < s.out; ++i)
            for (int j = 0; j < s.in; ++j) max_w = std::max(max_w, std::fabs(big.weight(l, i, j)));
        CHECK(max_w <= bound);
        CHECK(max_w > 0.8 * bound);
    }
}

TEST_CASE("narrow initialization lands on the format grid") {
    const MlpParams p = init_mlp(6, 2, 16, kFp32);
    for (double v : p.flat()) CHECK(double(float(v)) == v);
}

TEST_CASE("zero network outputs zero") {
    const MlpParams p(2, 7);
    Rng rng(1);
    for (int i = 0; i < 20; ++i) CHECK(forward(p, rng.uniform(-5, 5), rng.uniform(-5, 5)) == 0.0);
}

TEST_CASE("one-unit network with unit weights is tanh(x + t)") {
    // The output layer is linear but every network has at least one tanh
    // layer, so the closest shape to a purely linear map is tanh(x + t).
    MlpParams p(1, 1);
    std::vector<double> theta = {1.0, 1.0, 0.0, 1.0, 0.0};
    p.assign(theta);
    CHECK(forward(p, 0.2, 0.3) == std::tanh(0.2 + 0.3));
    theta[3] = 2.0;
    theta[4] = -0.5;
    p.assign(theta);
    CHECK(forward(p, -0.7, 0.1) == 2.0 * std::tanh(-0.7 + 0.1) - 0.5);
}

TEST_CASE("forward matches an independent matrix evaluation") {
    const MlpParams p = init_mlp(31, 3, 9);
    std::vector<std::vector<std::vector<double>>> w;
    std::vector<std::vector<double>> b;
    Rng rng(77);
    std::vector<double> theta(p.size());
    for (auto& v : theta) v = rng.uniform(-0.5, 0.5);
    MlpParams q = p;
    q.assign(theta);
    std::size_t k = 0;
    for (const auto& s : q.layers()) {
        w.emplace_back(std::size_t(s.out), std::vector<double>(std::size_t(s.in)));
        for (auto& row : w.back())
            for (auto& v : row) v = theta[k++];
        b.emplace_back(theta.begin() + std::ptrdiff_t(k), theta.begin() + std::ptrdiff_t(k + std::size_t(s.out)));
        k += std::size_t(s.out);
    }
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-3, 3), t = rng.uniform(0, 1);
        CHECK(forward(q, x, t) == doctest::Approx(reference_forward(w, b, x, t)).epsilon(1e-14));
    }
}

TEST_CASE("widening fp32 parameters changes the output by fp32 forward rounding only") {
    const MlpParams p = init_mlp(2, 3, 32, kFp32);
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const double x = rng.uniform(0, 6), t = rng.uniform(0, 1);
        const double wide = forward(p, x, t, kFp64);
        const double narrow = forward(p, x, t, kFp32);
        CHECK(std::fabs(wide - narrow) <= 1e-4 * std::max(1.0, std::fabs(wide)));
    }
}

TEST_CASE("tape forward reproduces scalar forward") {
    const MlpParams p = init_mlp(13, 2, 10);
    ad::Tape tape;
    const auto x = tape.variable(0.4);
    const auto t = tape.variable(0.9);
    std::vector<ad::Var> theta;
    for (double v : p.flat()) theta.push_back(tape.variable(v));
    CHECK(forward(p, tape, x, t, theta).value() == forward(p, 0.4, 0.9));
    theta.pop_back();
    CHECK_THROWS_AS(forward(p, tape, x, t, theta), std::invalid_argument);
}

TEST_CASE("invalid shapes are rejected") {
    CHECK_THROWS_AS(MlpParams(0, 4), std::invalid_argument);
    CHECK_THROWS_AS(MlpParams(2, 0), std::invalid_argument);
    MlpParams p(1, 2);
    std::vector<double> wrong(3);
    CHECK_THROWS_AS(p.assign(wrong), std::invalid_argument);
}

}  // TEST_SUITE

#include <bit>
#include <cmath>
#include <cstdint>
#include <ios>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "pinnlab/precision.hpp"
#include "pinnlab/rng.hpp"

using namespace pinnlab;

namespace {

// Reference rounding on binary32 bit patterns: keep the top (32 - drop) bits
// with round-to-nearest-even, which is exact for any binary32 input.
float round_bits(float v, int drop) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    const std::uint32_t half = (1u << (drop - 1)) - 1;
    const std::uint32_t lsb = (bits >> drop) & 1u;
    bits += half + lsb;
    bits &= ~((1u << drop) - 1);
    return std::bit_cast<float>(bits);
}

float bf16_oracle(float v) { return round_bits(v, 16); }
float tf32_oracle(float v) { return round_bits(v, 13); }

bool same(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

}  // namespace

TEST_SUITE("precision") {

TEST_CASE("machine epsilon of each format") {
    CHECK(machine_epsilon(kFp32) == 1.1920928955078125e-7);
    CHECK(machine_epsilon(kFp64) == 2.220446049250313e-16);
    CHECK(machine_epsilon(kTf32) == 0x1p-10);
    CHECK(machine_epsilon(kBf16) == 0x1p-7);

    PrecisionSpec tiny = kFp64;
    tiny.significand_bits = 2;
    CHECK(machine_epsilon(tiny) == 0.5);

    CHECK(kFp64.significand_bits > kFp32.significand_bits);
    CHECK(kFp32.significand_bits > kTf32.significand_bits);
    CHECK(kTf32.significand_bits > kBf16.significand_bits);
    for (auto f : {Format::fp64, Format::fp32, Format::tf32, Format::bf16}) {
        const auto s = spec_for(f);
        CHECK(s.epsilon == std::ldexp(1.0, 1 - s.significand_bits));
        CHECK(machine_epsilon(s) == s.epsilon);
    }
}

TEST_CASE("round_to examples") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(rng.uniform(-1.0, 1.0), int(rng.next() % 200) - 100);
        CHECK(same(round_to(kFp64, v), v));
    }
    CHECK(round_to(kBf16, 1.0 + 0x1p-9) == 1.0);
    CHECK(round_to(kTf32, 1.0 + 0x1p-10) == 1.0 + 0x1p-10);
    CHECK(std::isnan(round_to(kBf16, std::numeric_limits<double>::quiet_NaN())));
    CHECK(round_to(kBf16, 1e300) == std::numeric_limits<double>::infinity());
    CHECK(round_to(kFp32, -1e300) == -std::numeric_limits<double>::infinity());
    CHECK(round_to(kTf32, std::numeric_limits<double>::infinity()) == std::numeric_limits<double>::infinity());
}

TEST_CASE("bf16 rounding matches the bit-level oracle over every pattern") {
    const std::uint32_t tails[] = {0x0000, 0x0001, 0x7FFF, 0x8000, 0x8001, 0xFFFF, 0x4000, 0xC000};
    long checked = 0;
    for (std::uint32_t hi = 0; hi < 0x10000; ++hi) {
        const float exact = std::bit_cast<float>(hi << 16);
        if (std::isnan(exact)) {
            continue;
        }
        REQUIRE(same(round_to(kBf16, double(exact)), double(exact)));
        for (auto tail : tails) {
            const float v = std::bit_cast<float>((hi << 16) | tail);
            if (std::isnan(v)) {
                continue;
            }
            const double got = round_to(kBf16, double(v));
            const double want = double(bf16_oracle(v));
            if (!same(got, want)) {
                FAIL_CHECK("pattern " << std::hex << ((hi << 16) | tail) << " got " << got << " want " << want);
            }
            ++checked;
        }
    }
    CHECK(checked > 500000);
}

TEST_CASE("tf32 rounding matches the bit-level oracle") {
    Rng rng(11);
    for (int i = 0; i < 200000; ++i) {
        const float v = std::bit_cast<float>(std::uint32_t(rng.next()));
        if (std::isnan(v)) {
            continue;
        }
        const double got = round_to(kTf32, double(v));
        REQUIRE(same(got, double(tf32_oracle(v))));
    }
    // Exact ties at the 11-bit grid go to even.
    CHECK(round_to(kTf32, 1.0 + 0x1p-11) == 1.0);
    CHECK(round_to(kTf32, 1.0 + 3 * 0x1p-11) == 1.0 + 0x1p-9);
}

TEST_CASE("idempotence and the half-ulp rule") {
    Rng rng(3);
    for (auto f : {Format::fp64, Format::fp32, Format::tf32, Format::bf16}) {
        const auto s = spec_for(f);
        for (int i = 0; i < 20000; ++i) {
            const double v = std::ldexp(rng.uniform(-1.0, 1.0), int(rng.next() % 120) - 60);
            const double once = round_to(s, v);
            CHECK(same(round_to(s, once), once));
        }
        const double eps = machine_epsilon(s);
        CHECK(emulated_op(s, ArithOp::add, 1.0, eps) != 1.0);
        CHECK(emulated_op(s, ArithOp::add, 1.0, eps / 2) == 1.0);
    }
}

TEST_CASE("emulated_op examples") {
    CHECK(emulated_op(kFp32, ArithOp::add, 1.0, 0x1p-24) == 1.0);
    CHECK(emulated_op(kFp32, ArithOp::add, 1.0, 0x1p-23) == 1.0 + 0x1p-23);
    CHECK(float(1.0f + 0x1p-23f) == float(1.0 + 0x1p-23));
    CHECK(emulated_op(kBf16, ArithOp::mul, 1.5, 1.5) == 2.25);
    CHECK(emulated_op(kBf16, ArithOp::div, 1.0, 0.0) == std::numeric_limits<double>::infinity());
    CHECK(std::isnan(emulated_op(kTf32, ArithOp::div, 0.0, 0.0)));
}

TEST_CASE("emulated fp32 agrees with native binary32 on random operands") {
    Rng rng(2024);
    long mismatches = 0;
    for (int i = 0; i < 100000; ++i) {
        const float a = float(std::ldexp(rng.uniform(-1.0, 1.0), int(rng.next() % 60) - 30));
        const float b = float(std::ldexp(rng.uniform(-1.0, 1.0), int(rng.next() % 60) - 30));
        volatile float va = a;
        volatile float vb = b;
        const float native[] = {va + vb, va - vb, va * vb, va / vb};
        const ArithOp ops[] = {ArithOp::add, ArithOp::sub, ArithOp::mul, ArithOp::div};
        for (int k = 0; k < 4; ++k) {
            if (!same(emulated_op(kFp32, ops[k], a, b), double(native[k]))) {
                ++mismatches;
            }
        }
    }
    CHECK(mismatches == 0);
}

TEST_CASE("fp32 subnormals round like hardware") {
    const float denorm = std::numeric_limits<float>::denorm_min();
    CHECK(round_to(kFp32, double(denorm) * 0.5) == 0.0);
    CHECK(round_to(kFp32, double(denorm) * 0.75) == double(denorm));
    CHECK(round_to(kFp32, double(denorm) * 1.5) == double(denorm) * 2);
}

TEST_CASE("format names") {
    for (auto f : {Format::fp64, Format::fp32, Format::tf32, Format::bf16}) {
        CHECK(parse_format(to_string(f)) == f);
    }
    CHECK_THROWS_AS(parse_format("fp16"), std::invalid_argument);
}

TEST_CASE("arithmetic policies agree with emulation") {
    Rng rng(5);
    for (auto f : {Format::fp64, Format::fp32, Format::bf16}) {
        const auto s = spec_for(f);
        dispatch_arith(s, [&](auto arith) {
            CHECK(arith.spec() == s);
            for (int i = 0; i < 2000; ++i) {
                const double a = round_to(s, rng.uniform(-4.0, 4.0));
                const double b = round_to(s, rng.uniform(-4.0, 4.0));
                using T = typename decltype(arith)::value_type;
                const T prod = arith.r(double(T(a) * T(b)));
                CHECK(same(double(prod), emulated_op(s, ArithOp::mul, a, b)));
                CHECK(same(double(arith.tanh(T(a))), round_to(s, std::tanh(a))));
            }
        });
    }
}

}  // TEST_SUITE

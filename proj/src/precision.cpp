#include "pinnlab/precision.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pinnlab {

double machine_epsilon(const PrecisionSpec& spec) {
    if (spec.radix == 2) {
        return std::ldexp(1.0, 1 - spec.significand_bits);
    }
    return std::pow(double(spec.radix), 1 - spec.significand_bits);
}

namespace detail {

// Round-to-nearest-even of a finite double onto a p-bit significand, done on
// the IEEE bit pattern so no intermediate format is involved.
double round_to_width(double v, int significand_bits) {
    if (significand_bits >= 53 || !std::isfinite(v) || v == 0.0) {
        return v;
    }
    const int drop = 53 - significand_bits;
    auto bits = std::bit_cast<std::uint64_t>(v);
    const std::uint64_t lsb = (bits >> drop) & 1u;
    const std::uint64_t half = (std::uint64_t{1} << (drop - 1)) - 1u + lsb;
    bits += half;
    bits &= ~((std::uint64_t{1} << drop) - 1u);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

double round_to(const PrecisionSpec& spec, double v) {
    switch (spec.format) {
    case Format::fp64:
        return v;
    case Format::fp32:
        return static_cast<double>(static_cast<float>(v));
    case Format::tf32:
    case Format::bf16:
        break;
    }
    if (!std::isfinite(v)) {
        return v;
    }
    const int p = spec.significand_bits;
    const int emax = (1 << (spec.exponent_bits - 1)) - 1;
    const int emin = 1 - emax;
    double r;
    if (std::fabs(v) < std::ldexp(1.0, emin)) {
        // Subnormal range: fixed quantum, ties to even via the default
        // rounding mode.
        const double quantum = std::ldexp(1.0, emin - (p - 1));
        r = std::nearbyint(v / quantum) * quantum;
    } else {
        r = detail::round_to_width(v, p);
    }
    const double max_finite = std::ldexp(2.0 - std::ldexp(1.0, 1 - p), emax);
    if (std::fabs(r) > max_finite) {
        return std::copysign(std::numeric_limits<double>::infinity(), v);
    }
    return r;
}

double emulated_op(const PrecisionSpec& spec, ArithOp op, double a, double b) {
    double wide = 0.0;
    switch (op) {
    case ArithOp::add: wide = a + b; break;
    case ArithOp::sub: wide = a - b; break;
    case ArithOp::mul: wide = a * b; break;
    case ArithOp::div: wide = a / b; break;
    }
    return round_to(spec, wide);
}

std::string_view to_string(Format f) {
    switch (f) {
    case Format::fp64: return "fp64";
    case Format::fp32: return "fp32";
    case Format::tf32: return "tf32";
    case Format::bf16: return "bf16";
    }
    return "?";
}

Format parse_format(std::string_view name) {
    if (name == "fp64") return Format::fp64;
    if (name == "fp32") return Format::fp32;
    if (name == "tf32") return Format::tf32;
    if (name == "bf16") return Format::bf16;
    throw std::invalid_argument("unknown precision '" + std::string(name) + "'");
}

}  // namespace pinnlab

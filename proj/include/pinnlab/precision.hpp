#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace pinnlab {

enum class Format { fp64, fp32, tf32, bf16 };

/// A binary floating-point format. Every format is carried inside a 64-bit
/// double; a value "belongs" to the format once it has passed through
/// round_to().
struct PrecisionSpec {
    Format format = Format::fp64;
    int radix = 2;
    int significand_bits = 53;  ///< p, including the implicit leading bit
    int exponent_bits = 11;
    double epsilon = 0x1p-52;   ///< radix^(1-p): gap between 1 and its successor

    friend bool operator==(const PrecisionSpec&, const PrecisionSpec&) = default;
};

constexpr PrecisionSpec spec_for(Format f) {
    switch (f) {
    case Format::fp64: return {Format::fp64, 2, 53, 11, 0x1p-52};
    case Format::fp32: return {Format::fp32, 2, 24, 8, 0x1p-23};
    case Format::tf32: return {Format::tf32, 2, 11, 8, 0x1p-10};
    case Format::bf16: return {Format::bf16, 2, 8, 8, 0x1p-7};
    }
    return {};
}

inline constexpr PrecisionSpec kFp64 = spec_for(Format::fp64);
inline constexpr PrecisionSpec kFp32 = spec_for(Format::fp32);
inline constexpr PrecisionSpec kTf32 = spec_for(Format::tf32);
inline constexpr PrecisionSpec kBf16 = spec_for(Format::bf16);

/// radix^(1-p), computed from the stored significand width.
double machine_epsilon(const PrecisionSpec& spec);

/// Round-to-nearest-even onto the format's significand grid, with overflow
/// to infinity and gradual underflow for 8-bit-exponent formats.
double round_to(const PrecisionSpec& spec, double v);

enum class ArithOp { add, sub, mul, div };

/// Exact double-precision operation followed by round_to().
double emulated_op(const PrecisionSpec& spec, ArithOp op, double a, double b);

std::string_view to_string(Format f);
/// Accepts "fp64", "fp32", "tf32", "bf16". Throws std::invalid_argument.
Format parse_format(std::string_view name);

namespace detail {
double round_to_width(double v, int significand_bits);
}

// ---------------------------------------------------------------------------
// Arithmetic policies. Kernels are templated on one of these so that a
// runtime PrecisionSpec selects a specialised loop. Each policy rounds after
// every primitive, so all three are bit-equivalent to the emulation model.
// ---------------------------------------------------------------------------

struct Fp64Arith {
    using value_type = double;
    static constexpr value_type r(double v) { return v; }
    static value_type tanh(value_type v) { return std::tanh(v); }
    static value_type sin(value_type v) { return std::sin(v); }
    static value_type cos(value_type v) { return std::cos(v); }
    static value_type exp(value_type v) { return std::exp(v); }
    PrecisionSpec spec() const { return kFp64; }
};

/// Native binary32. Sums/products of binary32 operands computed in binary32
/// are identical to computing in binary64 and rounding once, since
/// 53 >= 2*24 + 2. Transcendentals go through double then round.
struct Fp32Arith {
    using value_type = float;
    static constexpr value_type r(double v) { return static_cast<float>(v); }
    static value_type tanh(value_type v) { return static_cast<float>(std::tanh(double(v))); }
    static value_type sin(value_type v) { return static_cast<float>(std::sin(double(v))); }
    static value_type cos(value_type v) { return static_cast<float>(std::cos(double(v))); }
    static value_type exp(value_type v) { return static_cast<float>(std::exp(double(v))); }
    PrecisionSpec spec() const { return kFp32; }
};

/// Narrow formats stored in doubles with explicit rounding after each op.
struct EmulatedArith {
    using value_type = double;
    PrecisionSpec format = kBf16;
    value_type r(double v) const { return round_to(format, v); }
    value_type tanh(value_type v) const { return r(std::tanh(v)); }
    value_type sin(value_type v) const { return r(std::sin(v)); }
    value_type cos(value_type v) const { return r(std::cos(v)); }
    value_type exp(value_type v) const { return r(std::exp(v)); }
    PrecisionSpec spec() const { return format; }
};

/// Calls fn with the arithmetic policy matching spec.
template <typename Fn>
decltype(auto) dispatch_arith(const PrecisionSpec& spec, Fn&& fn) {
    switch (spec.format) {
    case Format::fp64: return fn(Fp64Arith{});
    case Format::fp32: return fn(Fp32Arith{});
    default: return fn(EmulatedArith{spec});
    }
}

}  // namespace pinnlab

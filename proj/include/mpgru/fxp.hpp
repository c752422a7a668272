#pragma once

// Scalar quantization math: affine (scale, zero-point) grids, the
// quantize/dequantize pair and fixed-point requantization multipliers.
//
// Convention used throughout the project:
//   q  = clamp(floor(r / S) - Z, lo, hi)
//   r~ = S * (q + Z)
// so the integer code that represents real 0 is -Z. Kernels work with
// that code directly (see zero_code()).

#include <cstdint>
#include <stdexcept>

namespace mpgru {

enum class QuantMode { symmetric, asymmetric };

struct QuantParams {
    double scale = 1.0;
    std::int64_t zero_point = 0;
    int bits = 8;
    bool is_signed = false;
    double alpha = 0.0;
    double beta = 1.0;
    // Set when the calibrated range was degenerate and had to be widened.
    bool widened = false;

    std::int64_t range_lo() const noexcept;
    std::int64_t range_hi() const noexcept;
    // Integer code representing the real value 0 (may lie outside the range).
    std::int64_t zero_code() const noexcept { return -zero_point; }

    bool operator==(const QuantParams&) const = default;
};

struct FixedPointScale {
    std::int32_t mantissa = 0;
    int shift = 0;

    double value() const noexcept;
    bool operator==(const FixedPointScale&) const = default;
};

class FixedPointOverflow : public std::runtime_error {
public:
    explicit FixedPointOverflow(double m);
};

inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 16;
inline constexpr int kMaxShift = 62;
inline constexpr double kDegenerateRange = 1e-12;
inline constexpr double kDegenerateWiden = 1e-6;

// Throws std::invalid_argument for bits outside [2,16] or beta < alpha.
// Ranges narrower than 1e-12 are widened by +-1e-6 around alpha and the
// result is flagged with `widened`.
QuantParams compute_qparams(double alpha, double beta, int bits, QuantMode mode);

std::int64_t quantize(double r, const QuantParams& qp) noexcept;
double dequantize(std::int64_t q, const QuantParams& qp) noexcept;
// Same grid as quantize but rounds to the nearest level; used for weights.
std::int64_t quantize_nearest(double r, const QuantParams& qp) noexcept;

// Round half away from zero.
std::int64_t round_half_away(double x) noexcept;

// Largest shift n in [0, 62] with round(M * 2^n) < 2^31.
FixedPointScale to_fixed_point(double m);

// round_half_away(x * mantissa / 2^shift), 128-bit intermediate, saturated.
std::int64_t fxp_mul_wide(std::int64_t x, const FixedPointScale& m) noexcept;
std::int32_t fxp_mul(std::int32_t x, const FixedPointScale& m) noexcept;

std::int32_t saturate_i32(std::int64_t x) noexcept;
std::int64_t clamp_code(std::int64_t q, const QuantParams& qp) noexcept;

}  // namespace mpgru

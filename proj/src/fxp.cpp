#include "mpgru/fxp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mpgru {

namespace {

constexpr std::int64_t kMantissaLimit = std::int64_t{1} << 31;

std::int64_t saturate_i64(__int128 x) noexcept {
    constexpr auto lo = std::numeric_limits<std::int64_t>::min();
    constexpr auto hi = std::numeric_limits<std::int64_t>::max();
    if (x < lo) return lo;
    if (x > hi) return hi;
    return static_cast<std::int64_t>(x);
}

}  // namespace

std::int64_t QuantParams::range_lo() const noexcept {
    if (is_signed) return -((std::int64_t{1} << (bits - 1)) - 1);
    return 0;
}

std::int64_t QuantParams::range_hi() const noexcept {
    if (is_signed) return (std::int64_t{1} << (bits - 1)) - 1;
    return (std::int64_t{1} << bits) - 1;
}

double FixedPointScale::value() const noexcept {
    return std::ldexp(static_cast<double>(mantissa), -shift);
}

FixedPointOverflow::FixedPointOverflow(double m)
    : std::runtime_error("fixed-point scale overflow: M = " + std::to_string(m) +
                         " is not representable below 2^31") {}

QuantParams compute_qparams(double alpha, double beta, int bits, QuantMode mode) {
    if (bits < kMinBits || bits > kMaxBits)
        throw std::invalid_argument("bit-width " + std::to_string(bits) + " outside [2,16]");
    if (!std::isfinite(alpha) || !std::isfinite(beta))
        throw std::invalid_argument("non-finite clipping range");
    if (beta < alpha) throw std::invalid_argument("clipping range has beta < alpha");

    QuantParams qp;
    qp.bits = bits;
    if (beta - alpha < kDegenerateRange) {
        beta = alpha + kDegenerateWiden;
        alpha = alpha - kDegenerateWiden;
        qp.widened = true;
    }

    if (mode == QuantMode::symmetric) {
        double m = std::max(std::abs(alpha), std::abs(beta));
        qp.is_signed = true;
        qp.alpha = -m;
        qp.beta = m;
        qp.scale = m / static_cast<double>((std::int64_t{1} << (bits - 1)) - 1);
        qp.zero_point = 0;
    } else {
        qp.is_signed = false;
        qp.alpha = alpha;
        qp.beta = beta;
        qp.scale = (beta - alpha) / static_cast<double>((std::int64_t{1} << bits) - 1);
        qp.zero_point = static_cast<std::int64_t>(std::floor(alpha / qp.scale));
    }
    return qp;
}

std::int64_t clamp_code(std::int64_t q, const QuantParams& qp) noexcept {
    return std::clamp(q, qp.range_lo(), qp.range_hi());
}

std::int64_t quantize(double r, const QuantParams& qp) noexcept {
    double level = std::floor(r / qp.scale) - static_cast<double>(qp.zero_point);
    double lo = static_cast<double>(qp.range_lo());
    double hi = static_cast<double>(qp.range_hi());
    if (!(level >= lo)) return qp.range_lo();  // also catches NaN
    if (level > hi) return qp.range_hi();
    return static_cast<std::int64_t>(level);
}

std::int64_t quantize_nearest(double r, const QuantParams& qp) noexcept {
    double level = std::round(r / qp.scale) - static_cast<double>(qp.zero_point);
    double lo = static_cast<double>(qp.range_lo());
    double hi = static_cast<double>(qp.range_hi());
    if (!(level >= lo)) return qp.range_lo();
    if (level > hi) return qp.range_hi();
    return static_cast<std::int64_t>(level);
}

double dequantize(std::int64_t q, const QuantParams& qp) noexcept {
    return qp.scale * static_cast<double>(q + qp.zero_point);
}

std::int64_t round_half_away(double x) noexcept {
    return static_cast<std::int64_t>(std::round(x));
}

FixedPointScale to_fixed_point(double m) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw FixedPointOverflow(m);
    if (m == 0.0) return {};
    int exponent = 0;
    std::frexp(m, &exponent);  // m = f * 2^exponent, f in [0.5, 1)
    int shift = std::min(kMaxShift, 31 - exponent);
    if (shift < 0) throw FixedPointOverflow(m);
    for (; shift >= 0; --shift) {
        std::int64_t mant = round_half_away(std::ldexp(m, shift));
        if (mant < kMantissaLimit)
            return {static_cast<std::int32_t>(mant), shift};
    }
    throw FixedPointOverflow(m);
}

std::int64_t fxp_mul_wide(std::int64_t x, const FixedPointScale& m) noexcept {
    __int128 prod = static_cast<__int128>(x) * m.mantissa;
    if (m.shift == 0) return saturate_i64(prod);
    bool negative = prod < 0;
    __int128 mag = negative ? -prod : prod;
    mag = (mag + (static_cast<__int128>(1) << (m.shift - 1))) >> m.shift;
    return saturate_i64(negative ? -mag : mag);
}

std::int32_t saturate_i32(std::int64_t x) noexcept {
    constexpr std::int64_t lo = std::numeric_limits<std::int32_t>::min();
    constexpr std::int64_t hi = std::numeric_limits<std::int32_t>::max();
    return static_cast<std::int32_t>(std::clamp(x, lo, hi));
}

std::int32_t fxp_mul(std::int32_t x, const FixedPointScale& m) noexcept {
    return saturate_i32(fxp_mul_wide(x, m));
}

}  // namespace mpgru

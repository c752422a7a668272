#pragma once

// Integer-only operators for the four block types of a quantized GRU:
// linear layers, element-wise add, element-wise multiply and LUT
// activations, plus the constant-minus used for the (1 - z) branch.
//
// All zero-points below (z_x, z1, z2, z_y, ...) are zero *codes*, i.e. the
// integer that represents real 0 on the corresponding grid.

#include <cstdint>
#include <span>
#include <vector>

#include "mpgru/fxp.hpp"

namespace mpgru {

using Codes = std::vector<std::int32_t>;

struct QLinearParams {
    int rows = 0;
    int cols = 0;
    std::vector<std::int32_t> q_w;    // rows x cols, row-major
    std::vector<std::int64_t> q_bias;  // q_b - z_x * rowsum(q_w)
    FixedPointScale m;                 // S_w * S_x / S_y
    std::int64_t z_y = 0;
    QuantParams w_qp;
    QuantParams in_qp;
    QuantParams out_qp;
};

struct QAddParams {
    FixedPointScale m_alpha;  // S1 / Sy
    FixedPointScale m_beta;   // S2 / S1
    std::int64_t z1 = 0;
    std::int64_t z2 = 0;
    std::int64_t z_y = 0;
    QuantParams out_qp;
};

struct QMulParams {
    FixedPointScale m_gamma;  // S1 * S2 / Sy
    std::int64_t z1 = 0;
    std::int64_t z2 = 0;
    std::int64_t z_y = 0;
    QuantParams out_qp;
};

// y = 1 - x. `one_code` is round(1 / S_x), the input-grid offset of real 1.
struct QComplParams {
    std::int64_t one_code = 0;
    std::int64_t z_x = 0;
    FixedPointScale m;  // S_x / S_y
    std::int64_t z_y = 0;
    QuantParams out_qp;
};

enum class ActivationKind { sigmoid, tanh };

struct ActivationLUT {
    std::vector<std::int32_t> table;
    int in_bits = 0;
    QuantParams out_qp;
    ActivationKind kind = ActivationKind::sigmoid;
};

// q_b is quantized at S_w * S_x; the result folds the input zero code in.
std::vector<std::int64_t> precompute_bias(std::span<const std::int64_t> q_b,
                                          std::span<const std::int32_t> q_w, int rows, int cols,
                                          std::int64_t z_x);

QLinearParams make_qlinear(std::span<const double> w, int rows, int cols,
                           std::span<const double> b, const QuantParams& w_qp,
                           const QuantParams& in_qp, const QuantParams& out_qp);
QAddParams make_qadd(const QuantParams& in1, const QuantParams& in2, const QuantParams& out);
QMulParams make_qmul(const QuantParams& in1, const QuantParams& in2, const QuantParams& out);
QComplParams make_qcompl(const QuantParams& in, const QuantParams& out);

// Raw accumulators sum(q_w * q_x) + q_bias, on the S_w * S_x grid.
std::vector<std::int64_t> qlinear_accumulate(std::span<const std::int32_t> q_x,
                                             const QLinearParams& p);
Codes qlinear(std::span<const std::int32_t> q_x, const QLinearParams& p);
Codes qadd(std::span<const std::int32_t> q1, std::span<const std::int32_t> q2,
           const QAddParams& p);
Codes qmul(std::span<const std::int32_t> q1, std::span<const std::int32_t> q2,
           const QMulParams& p);
Codes qcompl(std::span<const std::int32_t> q_x, const QComplParams& p);

double activation(ActivationKind kind, double x) noexcept;
ActivationLUT build_lut(ActivationKind kind, const QuantParams& in_qp, const QuantParams& out_qp);
Codes lut_apply(std::span<const std::int32_t> q_x, const ActivationLUT& lut);

}  // namespace mpgru

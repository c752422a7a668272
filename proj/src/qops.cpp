#include "mpgru/qops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mpgru/errors.hpp"

namespace mpgru {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
    if (a != b)
        throw ConfigError(std::string(op) + ": operand lengths differ (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
}

std::int32_t finish(std::int64_t requantized, std::int64_t z_y, const QuantParams& out) {
    return static_cast<std::int32_t>(clamp_code(requantized + z_y, out));
}

}  // namespace

std::vector<std::int64_t> precompute_bias(std::span<const std::int64_t> q_b,
                                          std::span<const std::int32_t> q_w, int rows, int cols,
                                          std::int64_t z_x) {
    if (q_b.size() != static_cast<std::size_t>(rows) ||
        q_w.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw ConfigError("precompute_bias: shape mismatch");
    std::vector<std::int64_t> out(rows);
    for (int i = 0; i < rows; ++i) {
        std::int64_t rowsum = 0;
        for (int j = 0; j < cols; ++j) rowsum += q_w[static_cast<std::size_t>(i) * cols + j];
        out[i] = q_b[i] - z_x * rowsum;
    }
    return out;
}

QLinearParams make_qlinear(std::span<const double> w, int rows, int cols,
                           std::span<const double> b, const QuantParams& w_qp,
                           const QuantParams& in_qp, const QuantParams& out_qp) {
    if (rows < 1 || cols < 1 || w.size() != static_cast<std::size_t>(rows) * cols ||
        b.size() != static_cast<std::size_t>(rows))
        throw ConfigError("make_qlinear: weight/bias shape mismatch");
    if (!w_qp.is_signed) throw ConfigError("make_qlinear: weights must be symmetric");

    QLinearParams p;
    p.rows = rows;
    p.cols = cols;
    p.w_qp = w_qp;
    p.in_qp = in_qp;
    p.out_qp = out_qp;
    p.q_w.resize(w.size());
    std::transform(w.begin(), w.end(), p.q_w.begin(),
                   [&](double v) { return static_cast<std::int32_t>(quantize_nearest(v, w_qp)); });

    const double bias_scale = w_qp.scale * in_qp.scale;
    std::vector<std::int64_t> q_b(rows);
    std::transform(b.begin(), b.end(), q_b.begin(),
                   [&](double v) { return round_half_away(v / bias_scale); });
    p.q_bias = precompute_bias(q_b, p.q_w, rows, cols, in_qp.zero_code());
    p.m = to_fixed_point(bias_scale / out_qp.scale);
    p.z_y = out_qp.zero_code();
    return p;
}

QAddParams make_qadd(const QuantParams& in1, const QuantParams& in2, const QuantParams& out) {
    QAddParams p;
    p.m_alpha = to_fixed_point(in1.scale / out.scale);
    p.m_beta = to_fixed_point(in2.scale / in1.scale);
    p.z1 = in1.zero_code();
    p.z2 = in2.zero_code();
    p.z_y = out.zero_code();
    p.out_qp = out;
    return p;
}

QMulParams make_qmul(const QuantParams& in1, const QuantParams& in2, const QuantParams& out) {
    QMulParams p;
    p.m_gamma = to_fixed_point(in1.scale * in2.scale / out.scale);
    p.z1 = in1.zero_code();
    p.z2 = in2.zero_code();
    p.z_y = out.zero_code();
    p.out_qp = out;
    return p;
}

QComplParams make_qcompl(const QuantParams& in, const QuantParams& out) {
    QComplParams p;
    p.one_code = round_half_away(1.0 / in.scale);
    p.z_x = in.zero_code();
    p.m = to_fixed_point(in.scale / out.scale);
    p.z_y = out.zero_code();
    p.out_qp = out;
    return p;
}

std::vector<std::int64_t> qlinear_accumulate(std::span<const std::int32_t> q_x,
                                             const QLinearParams& p) {
    require_same_length(q_x.size(), static_cast<std::size_t>(p.cols), "qlinear");
    std::vector<std::int64_t> acc(p.rows);
    for (int i = 0; i < p.rows; ++i) {
        const std::int32_t* row = p.q_w.data() + static_cast<std::size_t>(i) * p.cols;
        std::int64_t sum = p.q_bias[i];
        for (int j = 0; j < p.cols; ++j)
            sum += static_cast<std::int64_t>(row[j]) * q_x[j];
        acc[i] = sum;
    }
    return acc;
}

Codes qlinear(std::span<const std::int32_t> q_x, const QLinearParams& p) {
    auto acc = qlinear_accumulate(q_x, p);
    Codes out(p.rows);
    for (int i = 0; i < p.rows; ++i) out[i] = finish(fxp_mul_wide(acc[i], p.m), p.z_y, p.out_qp);
    return out;
}

Codes qadd(std::span<const std::int32_t> q1, std::span<const std::int32_t> q2,
           const QAddParams& p) {
    require_same_length(q1.size(), q2.size(), "qadd");
    Codes out(q1.size());
    for (std::size_t i = 0; i < q1.size(); ++i) {
        std::int64_t aligned = fxp_mul_wide(q2[i] - p.z2, p.m_beta);
        std::int64_t sum = (q1[i] - p.z1) + aligned;
        out[i] = finish(fxp_mul_wide(sum, p.m_alpha), p.z_y, p.out_qp);
    }
    return out;
}

Codes qmul(std::span<const std::int32_t> q1, std::span<const std::int32_t> q2,
           const QMulParams& p) {
    require_same_length(q1.size(), q2.size(), "qmul");
    Codes out(q1.size());
    for (std::size_t i = 0; i < q1.size(); ++i) {
        std::int64_t a = q1[i];
        std::int64_t b = q2[i];
        std::int64_t prod = a * b - a * p.z2 - b * p.z1 + p.z1 * p.z2;
        out[i] = finish(fxp_mul_wide(prod, p.m_gamma), p.z_y, p.out_qp);
    }
    return out;
}

Codes qcompl(std::span<const std::int32_t> q_x, const QComplParams& p) {
    Codes out(q_x.size());
    for (std::size_t i = 0; i < q_x.size(); ++i) {
        std::int64_t flipped = p.one_code - (q_x[i] - p.z_x);
        out[i] = finish(fxp_mul_wide(flipped, p.m), p.z_y, p.out_qp);
    }
    return out;
}

double activation(ActivationKind kind, double x) noexcept {
    if (kind == ActivationKind::tanh) return std::tanh(x);
    return 1.0 / (1.0 + std::exp(-x));
}

ActivationLUT build_lut(ActivationKind kind, const QuantParams& in_qp,
                        const QuantParams& out_qp) {
    if (in_qp.is_signed) throw ConfigError("build_lut: activation inputs must be unsigned");
    ActivationLUT lut;
    lut.kind = kind;
    lut.in_bits = in_qp.bits;
    lut.out_qp = out_qp;
    const std::int64_t length = std::int64_t{1} << in_qp.bits;
    lut.table.resize(static_cast<std::size_t>(length));
    for (std::int64_t q = 0; q < length; ++q)
        lut.table[q] = static_cast<std::int32_t>(
            quantize(activation(kind, dequantize(q, in_qp)), out_qp));
    return lut;
}

Codes lut_apply(std::span<const std::int32_t> q_x, const ActivationLUT& lut) {
    const std::int64_t length = static_cast<std::int64_t>(lut.table.size());
    const std::int64_t stride = length / ((std::int64_t{1} << lut.in_bits) - 1);
    Codes out(q_x.size());
    for (std::size_t i = 0; i < q_x.size(); ++i) {
        std::int64_t index = std::clamp<std::int64_t>(stride * q_x[i], 0, length - 1);
        out[i] = lut.table[index];
    }
    return out;
}

}  // namespace mpgru

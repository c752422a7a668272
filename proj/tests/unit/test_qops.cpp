#include <doctest.h>

#include <cmath>
#include <random>

#include "mpgru/errors.hpp"
#include "mpgru/qops.hpp"

using namespace mpgru;

namespace {

QuantParams asym(double a, double b, int bits) { return compute_qparams(a, b, bits, QuantMode::asymmetric); }

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LinearCase {
    std::vector<double> w, b, x;
    int rows, cols;
};

LinearCase random_linear(std::mt19937_64& rng, int rows, int cols) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LinearCase c{{}, {}, {}, rows, cols};
    for (int i = 0; i < rows * cols; ++i) c.w.push_back(u(rng));
    for (int i = 0; i < rows; ++i) c.b.push_back(0.5 * u(rng));
    for (int i = 0; i < cols; ++i) c.x.push_back(0.5 + 0.5 * u(rng));
    return c;
}

// Max error of one quantized linear layer against the float product taken on
// the dequantized input codes.
double linear_error(const LinearCase& c, int bits, double* out_scale = nullptr) {
    const auto in_qp = asym(0.0, 1.0, bits);
    Codes qx;
    for (double v : c.x) qx.push_back(static_cast<std::int32_t>(quantize(v, in_qp)));
    std::vector<double> y(c.rows);
    double lo = 1e300, hi = -1e300, wmax = 0;
    for (int i = 0; i < c.rows; ++i) {
        y[i] = c.b[i];
        for (int j = 0; j < c.cols; ++j) y[i] += c.w[i * c.cols + j] * dequantize(qx[j], in_qp);
        lo = std::min(lo, y[i]);
        hi = std::max(hi, y[i]);
    }
    for (double v : c.w) wmax = std::max(wmax, std::abs(v));
    const auto w_qp = compute_qparams(-wmax, wmax, bits, QuantMode::symmetric);
    const auto out_qp = asym(lo, hi, bits);
    const auto p = make_qlinear(c.w, c.rows, c.cols, c.b, w_qp, in_qp, out_qp);
    const Codes qy = qlinear(qx, p);
    double err = 0;
    for (int i = 0; i < c.rows; ++i) {
        REQUIRE(qy[i] >= out_qp.range_lo());
        REQUIRE(qy[i] <= out_qp.range_hi());
        err = std::max(err, std::abs(dequantize(qy[i], out_qp) - y[i]));
    }
    if (out_scale) *out_scale = out_qp.scale;
    return err;
}

}  // namespace

TEST_CASE("qlinear: hand example") {
    QLinearParams p;
    p.rows = 1;
    p.cols = 1;
    p.q_w = {2};
    const std::int64_t q_b[] = {2};
    p.q_bias = precompute_bias(q_b, p.q_w, 1, 1, 1);
    CHECK(p.q_bias[0] == 0);
    p.m = to_fixed_point(0.5);
    p.z_y = 10;
    p.out_qp = asym(0.0, 31.0, 5);
    const std::int32_t x[] = {3};
    CHECK(qlinear(x, p) == Codes{13});
}

TEST_CASE("qlinear: zero weights land on the output zero code") {
    const std::vector<double> w(6, 0.0), b(2, 0.0);
    const auto out_qp = asym(-1.0, 1.0, 8);
    const auto p = make_qlinear(w, 2, 3, b, compute_qparams(-1, 1, 8, QuantMode::symmetric), asym(0, 1, 8), out_qp);
    const std::int32_t x[] = {10, 200, 37};
    for (auto q : qlinear(x, p)) CHECK(q == out_qp.zero_code());
}

TEST_CASE("qlinear: dimension mismatch is a configuration error") {
    const std::vector<double> w(6, 0.1), b(2, 0.0);
    const auto p = make_qlinear(w, 2, 3, b, compute_qparams(-1, 1, 8, QuantMode::symmetric), asym(0, 1, 8),
                                asym(-1, 1, 8));
    const std::int32_t x[] = {1, 2};
    CHECK_THROWS_AS(qlinear(x, p), ConfigError);
}

TEST_CASE("qlinear: 16-bit oracle on random 8x8 layers") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
        double s = 0;
        const double err = linear_error(random_linear(rng, 8, 8), 16, &s);
        REQUIRE(err <= 2 * s);
    }
}

TEST_CASE("qadd / qmul: hand examples") {
    const auto g = asym(0.0, 25.5, 8);
    const auto addp = make_qadd(g, g, g);
    const std::int32_t a[] = {5}, b[] = {7};
    CHECK(qadd(a, b, addp) == Codes{12});

    const auto fine = asym(0.0, 2.55, 8);
    const auto mulp = make_qmul(g, g, fine);
    CHECK(mulp.m_gamma.value() == doctest::Approx(1.0));
    CHECK(qmul(a, b, mulp) == Codes{35});
}

TEST_CASE("qadd / qmul: zero operands") {
    const auto g1 = asym(-2.0, 3.0, 8), g2 = asym(-1.0, 0.5, 8), gy = asym(-4.0, 4.0, 8);
    const auto addp = make_qadd(g1, g2, gy);
    const std::int32_t z1[] = {static_cast<std::int32_t>(g1.zero_code())};
    const std::int32_t z2[] = {static_cast<std::int32_t>(g2.zero_code())};
    CHECK(qadd(z1, z2, addp)[0] == gy.zero_code());
    const auto mulp = make_qmul(g1, g2, gy);
    const std::int32_t any[] = {17};
    CHECK(qmul(z1, any, mulp)[0] == gy.zero_code());
    const std::int32_t pair[] = {1, 2};
    CHECK_THROWS_AS(qadd(pair, any, addp), ConfigError);
    CHECK_THROWS_AS(qmul(pair, any, mulp), ConfigError);
}

TEST_CASE("qadd / qmul / qcompl: 12-bit oracle") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ends(-3.0, 3.0);
    for (int t = 0; t < 300; ++t) {
        double a1 = ends(rng), b1 = ends(rng), a2 = ends(rng), b2 = ends(rng);
        if (a1 > b1) std::swap(a1, b1);
        if (a2 > b2) std::swap(a2, b2);
        b1 += 0.1;
        b2 += 0.1;
        const auto q1 = asym(a1, b1, 12), q2 = asym(a2, b2, 12);
        const auto sum_qp = asym(a1 + a2, b1 + b2, 12);
        const double pl[] = {a1 * a2, a1 * b2, b1 * a2, b1 * b2};
        const auto prod_qp = asym(*std::min_element(pl, pl + 4), *std::max_element(pl, pl + 4), 12);
        const auto addp = make_qadd(q1, q2, sum_qp);
        const auto mulp = make_qmul(q1, q2, prod_qp);
        std::uniform_int_distribution<std::int32_t> c1(0, 4095), c2(0, 4095);
        Codes x1(16), x2(16);
        for (int i = 0; i < 16; ++i) {
            x1[i] = c1(rng);
            x2[i] = c2(rng);
        }
        const Codes ys = qadd(x1, x2, addp), yp = qmul(x1, x2, mulp);
        for (int i = 0; i < 16; ++i) {
            const double r1 = dequantize(x1[i], q1), r2 = dequantize(x2[i], q2);
            // Oracle values clipped into the output grid's representable span.
            auto clip = [](double v, const QuantParams& q) {
                return std::clamp(v, dequantize(q.range_lo(), q), dequantize(q.range_hi(), q));
            };
            REQUIRE(std::abs(dequantize(ys[i], sum_qp) - clip(r1 + r2, sum_qp)) <= 2 * sum_qp.scale);
            REQUIRE(std::abs(dequantize(yp[i], prod_qp) - clip(r1 * r2, prod_qp)) <= 2 * prod_qp.scale);
        }
    }

    const auto zin = asym(0.0, 1.0, 12), zout = asym(0.0, 1.0, 12);
    const auto cp = make_qcompl(zin, zout);
    Codes all(4096);
    for (int q = 0; q < 4096; ++q) all[q] = q;
    const Codes y = qcompl(all, cp);
    for (int q = 0; q < 4096; ++q)
        REQUIRE(std::abs(dequantize(y[q], zout) - (1.0 - dequantize(q, zin))) <= 2 * zout.scale);
}

TEST_CASE("outputs stay in range: exhaustive at 2-4 bits") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ends(-2.0, 2.0);
    for (int bits = 2; bits <= 4; ++bits) {
        for (int t = 0; t < 20; ++t) {
            double a = ends(rng), b = ends(rng);
            if (a > b) std::swap(a, b);
            const auto q1 = asym(a, b + 0.05, bits), q2 = asym(-1.0, 1.0, bits), qy = asym(a, b + 0.5, bits);
            const auto addp = make_qadd(q1, q2, qy);
            const auto mulp = make_qmul(q1, q2, qy);
            const auto cp = make_qcompl(q1, qy);
            const int n = 1 << bits;
            for (std::int32_t i = 0; i < n; ++i)
                for (std::int32_t j = 0; j < n; ++j) {
                    const std::int32_t x1[] = {i}, x2[] = {j};
                    for (auto y : {qadd(x1, x2, addp)[0], qmul(x1, x2, mulp)[0], qcompl(x1, cp)[0]}) {
                        REQUIRE(y >= qy.range_lo());
                        REQUIRE(y <= qy.range_hi());
                    }
                }
        }
    }
}

TEST_CASE("degradation is monotone in bit-width (statistical)") {
    for (int b : {2, 4, 6}) {
        std::mt19937_64 rng(100 + b);
        double lin_lo = 0, lin_hi = 0, add_lo = 0, add_hi = 0, mul_lo = 0, mul_hi = 0;
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int t = 0; t < 100; ++t) {
            const auto c = random_linear(rng, 6, 6);
            lin_lo += linear_error(c, b);
            lin_hi += linear_error(c, b + 2);
            const double r1 = u(rng), r2 = u(rng);
            for (int bits : {b, b + 2}) {
                const auto q = asym(-1.0, 1.0, bits), qs = asym(-2.0, 2.0, bits);
                const std::int32_t x1[] = {static_cast<std::int32_t>(quantize(r1, q))};
                const std::int32_t x2[] = {static_cast<std::int32_t>(quantize(r2, q))};
                const double ea = std::abs(dequantize(qadd(x1, x2, make_qadd(q, q, qs))[0], qs) - (r1 + r2));
                const double em = std::abs(dequantize(qmul(x1, x2, make_qmul(q, q, q))[0], q) - r1 * r2);
                (bits == b ? add_lo : add_hi) += ea;
                (bits == b ? mul_lo : mul_hi) += em;
            }
        }
        CHECK(lin_lo >= lin_hi);
        CHECK(add_lo >= add_hi);
        CHECK(mul_lo >= mul_hi);
    }
}

TEST_CASE("build_lut: sigmoid worked example and lut_apply") {
    const auto in = asym(-8.0, 8.0, 8);
    CHECK(in.zero_point == -128);
    const auto out = asym(0.0, 1.0, 8);
    const auto lut = build_lut(ActivationKind::sigmoid, in, out);
    REQUIRE(lut.table.size() == 256);
    CHECK(lut.table[128] == 127);
    const std::int32_t q[] = {128, 0, 255};
    const Codes y = lut_apply(q, lut);
    CHECK(y[0] == 127);
    CHECK(y[1] == lut.table[0]);
    CHECK(y[2] == lut.table[255]);
    for (std::size_t i = 0; i < lut.table.size(); ++i) {
        CHECK(lut.table[i] >= 0);
        CHECK(lut.table[i] <= 255);
        if (i) CHECK(lut.table[i] >= lut.table[i - 1]);
        const double x = dequantize(static_cast<std::int64_t>(i), in);
        CHECK(std::abs(dequantize(lut.table[i], out) - sigmoid_ref(x)) <= out.scale);
    }
}

TEST_CASE("build_lut: tanh codes are symmetric about the zero code") {
    const auto in = asym(-1.0, 1.0, 8);
    const auto out = asym(-1.0, 1.0, 8);
    const auto lut = build_lut(ActivationKind::tanh, in, out);
    const auto zc = in.zero_code();
    CHECK(std::abs(dequantize(lut.table[zc], out)) <= out.scale);
    for (int k = 1; k < 128; ++k) {
        const double up = dequantize(lut.table[zc + k], out);
        const double down = dequantize(lut.table[zc - k], out);
        CHECK(std::abs(up + down) <= 2 * out.scale);
    }
    CHECK_THROWS(build_lut(ActivationKind::tanh, compute_qparams(-1, 1, 8, QuantMode::symmetric), out));
}

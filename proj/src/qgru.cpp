#include "mpgru/qgru.hpp"

#include <algorithm>

#include "mpgru/errors.hpp"

namespace mpgru {

namespace {

std::vector<double> flat(const Matrix& m) {
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    return out;
}

std::vector<double> flat(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void validate_bits(const BitWidths& bits) {
    for (std::size_t k = 0; k < kNumBlocks; ++k)
        if (bits[k] < kMinBits || bits[k] > kMaxBits)
            throw ConfigError("block " + std::string(site_name(k)) + " has bit-width " +
                              std::to_string(bits[k]) + " outside [2,16]");
}

}  // namespace

const QuantParams& QuantizedGRUModel::out_qp(BlockId id) const {
    switch (id) {
        case BlockId::Wir:
        case BlockId::Wiz:
        case BlockId::Win:
        case BlockId::Whr:
        case BlockId::Whz:
        case BlockId::Whn: return linear[index_of(id)].out_qp;
        case BlockId::add_r: return add_r.out_qp;
        case BlockId::add_z: return add_z.out_qp;
        case BlockId::add_n: return add_n.out_qp;
        case BlockId::sig_r: return sig_r.out_qp;
        case BlockId::sig_z: return sig_z.out_qp;
        case BlockId::tanh_n: return tanh_n.out_qp;
        case BlockId::mul_r: return mul_r.out_qp;
        case BlockId::compl_z: return compl_z.out_qp;
        case BlockId::mul_new: return mul_new.out_qp;
        case BlockId::mul_old: return mul_old.out_qp;
        case BlockId::add_h: return add_h.out_qp;
    }
    throw ConfigError("unknown block id");
}

QuantizedGRUModel quantize_model(const GRUWeights& w, const CalibrationStats& stats,
                                 const BitWidths& bits) {
    validate(w);
    validate_bits(bits);
    const auto act = stats_to_qparams(stats, bits);
    auto q = [&](BlockId id) -> const QuantParams& { return act[index_of(id)]; };

    QuantizedGRUModel m;
    m.dims = w.dims;
    m.bits = bits;
    m.input_qp = act[kInputSite];
    const QuantParams& hidden = q(BlockId::add_h);

    for (std::size_t k = 0; k < kNumLinearBlocks; ++k) {
        const Matrix& W = w.W[k];
        const QuantParams w_qp = weight_qparams(W, bits[k]);
        const QuantParams& in_qp = k < 3 ? m.input_qp : hidden;
        auto wf = flat(W);
        auto bf = flat(w.b[k]);
        m.linear[k] = make_qlinear(wf, static_cast<int>(W.rows()), static_cast<int>(W.cols()), bf,
                                   w_qp, in_qp, act[k]);
        if (w_qp.widened)
            m.warnings.push_back("weights of " + std::string(site_name(k)) + " have a degenerate range");
    }
    auto lin = [&](BlockId id) -> const QuantParams& { return m.linear[index_of(id)].out_qp; };

    m.add_r = make_qadd(lin(BlockId::Wir), lin(BlockId::Whr), q(BlockId::add_r));
    m.add_z = make_qadd(lin(BlockId::Wiz), lin(BlockId::Whz), q(BlockId::add_z));
    m.sig_r = build_lut(ActivationKind::sigmoid, q(BlockId::add_r), q(BlockId::sig_r));
    m.sig_z = build_lut(ActivationKind::sigmoid, q(BlockId::add_z), q(BlockId::sig_z));
    m.mul_r = make_qmul(q(BlockId::sig_r), lin(BlockId::Whn), q(BlockId::mul_r));
    m.add_n = make_qadd(lin(BlockId::Win), q(BlockId::mul_r), q(BlockId::add_n));
    m.tanh_n = build_lut(ActivationKind::tanh, q(BlockId::add_n), q(BlockId::tanh_n));
    m.compl_z = make_qcompl(q(BlockId::sig_z), q(BlockId::compl_z));
    m.mul_new = make_qmul(q(BlockId::compl_z), q(BlockId::tanh_n), q(BlockId::mul_new));
    m.mul_old = make_qmul(q(BlockId::sig_z), hidden, q(BlockId::mul_old));
    m.add_h = make_qadd(q(BlockId::mul_new), q(BlockId::mul_old), hidden);

    const QuantParams wc_qp = weight_qparams(w.Wc, kClassifierBits);
    QuantParams acc_qp;
    acc_qp.scale = wc_qp.scale * hidden.scale;
    acc_qp.zero_point = 0;
    acc_qp.bits = kMaxBits;
    acc_qp.is_signed = true;
    acc_qp.alpha = -acc_qp.scale * static_cast<double>(acc_qp.range_hi());
    acc_qp.beta = -acc_qp.alpha;
    auto wc = flat(w.Wc);
    auto bc = flat(w.bc);
    m.classifier = make_qlinear(wc, static_cast<int>(w.Wc.rows()), static_cast<int>(w.Wc.cols()),
                                bc, wc_qp, hidden, acc_qp);

    for (std::size_t s = 0; s < kNumSites; ++s)
        if (act[s].widened)
            m.warnings.push_back("site " + std::string(site_name(s)) +
                                 " has a degenerate calibration range; widened");
    return m;
}

Codes quantize_input(std::span<const float> x, const QuantizedGRUModel& model) {
    Codes out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = static_cast<std::int32_t>(quantize(x[i], model.input_qp));
    return out;
}

std::vector<Codes> quantize_sequence(const SequenceDataset& ds, std::size_t sample,
                                     const QuantizedGRUModel& model) {
    std::vector<Codes> seq;
    seq.reserve(static_cast<std::size_t>(ds.steps));
    for (int t = 0; t < ds.steps; ++t) seq.push_back(quantize_input(ds.row(sample, t), model));
    return seq;
}

Codes initial_state(const QuantizedGRUModel& model) {
    const auto z = static_cast<std::int32_t>(clamp_code(model.hidden_qp().zero_code(), model.hidden_qp()));
    return Codes(static_cast<std::size_t>(model.dims.hidden_size), z);
}

Codes qgru_step(std::span<const std::int32_t> q_x, std::span<const std::int32_t> q_h,
                const QuantizedGRUModel& m) {
    const Codes ir = qlinear(q_x, m.linear[index_of(BlockId::Wir)]);
    const Codes iz = qlinear(q_x, m.linear[index_of(BlockId::Wiz)]);
    const Codes in = qlinear(q_x, m.linear[index_of(BlockId::Win)]);
    const Codes hr = qlinear(q_h, m.linear[index_of(BlockId::Whr)]);
    const Codes hz = qlinear(q_h, m.linear[index_of(BlockId::Whz)]);
    const Codes hn = qlinear(q_h, m.linear[index_of(BlockId::Whn)]);

    const Codes r = lut_apply(qadd(ir, hr, m.add_r), m.sig_r);
    const Codes z = lut_apply(qadd(iz, hz, m.add_z), m.sig_z);
    const Codes gated = qmul(r, hn, m.mul_r);
    const Codes n = lut_apply(qadd(in, gated, m.add_n), m.tanh_n);
    const Codes keep_new = qcompl(z, m.compl_z);
    const Codes fresh = qmul(keep_new, n, m.mul_new);
    const Codes carried = qmul(z, q_h, m.mul_old);
    return qadd(fresh, carried, m.add_h);
}

Classification qgru_classify(std::span<const Codes> sequence, const QuantizedGRUModel& model) {
    if (sequence.empty()) throw ConfigError("qgru_classify: empty sequence");
    Codes h = initial_state(model);
    for (const Codes& x : sequence) h = qgru_step(x, h, model);
    Classification out;
    out.logits = qlinear_accumulate(h, model.classifier);
    out.label = argmax(out.logits);
    return out;
}

std::vector<int> quantized_predict(const QuantizedGRUModel& model, const SequenceDataset& ds) {
    std::vector<int> out(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        out[i] = qgru_classify(quantize_sequence(ds, i, model), model).label;
    return out;
}

double quantized_accuracy(const QuantizedGRUModel& model, const SequenceDataset& ds) {
    if (ds.size() == 0) return 0.0;
    const auto pred = quantized_predict(model, ds);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) hits += pred[i] == ds.labels[i];
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

std::int64_t gru_weight_bits(const BitWidths& bits, const ModelDims& dims) {
    const std::int64_t H = dims.hidden_size;
    std::int64_t total = 0;
    for (std::size_t k = 0; k < kNumLinearBlocks; ++k) {
        const std::int64_t cols = k < 3 ? dims.input_features : dims.hidden_size;
        total += H * cols * bits[k];
    }
    return total;
}

std::int64_t model_size_bits(const BitWidths& bits, const ModelDims& dims, bool baseline) {
    const std::int64_t H = dims.hidden_size;
    const std::int64_t C = dims.num_classes;
    const BitWidths effective = baseline ? uniform_bits(kBaselineBits) : bits;
    std::int64_t total = gru_weight_bits(effective, dims);
    total += static_cast<std::int64_t>(kNumLinearBlocks) * H * kBiasBits;
    total += C * H * (baseline ? kBaselineBits : kClassifierBits) + C * kBiasBits;
    return total;
}

double size_complement(const BitWidths& bits, const ModelDims& dims) {
    return 1.0 - static_cast<double>(model_size_bits(bits, dims)) /
                     static_cast<double>(model_size_bits(bits, dims, true));
}

}  // namespace mpgru

#include "mpgru/refnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "mpgru/errors.hpp"

namespace mpgru {

namespace {

Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

Matrix linear(const Matrix& W, const Vector& b, const Matrix& x) {
    Matrix y = W * x;
    y.colwise() += b;
    return y;
}

std::size_t idx(BlockId b) { return index_of(b); }

int input_width(BlockId b, const ModelDims& dims) {
    return index_of(b) < 3 ? dims.input_features : dims.hidden_size;
}

}  // namespace

// ---------------------------------------------------------------- weights

GRUWeights GRUWeights::zeros(const ModelDims& dims) {
    validate(dims);
    GRUWeights w;
    w.dims = dims;
    for (std::size_t k = 0; k < kNumLinearBlocks; ++k) {
        auto id = static_cast<BlockId>(k);
        w.W[k] = Matrix::Zero(dims.hidden_size, input_width(id, dims));
        w.b[k] = Vector::Zero(dims.hidden_size);
    }
    w.Wc = Matrix::Zero(dims.num_classes, dims.hidden_size);
    w.bc = Vector::Zero(dims.num_classes);
    return w;
}

GRUWeights GRUWeights::random_init(const ModelDims& dims, std::uint64_t seed) {
    GRUWeights w = zeros(dims);
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims.hidden_size));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for_each_param(w, [&](auto& p) {
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = dist(rng);
    });
    return w;
}

std::size_t GRUWeights::parameter_count() const {
    std::size_t n = 0;
    for_each_param(*this, [&](const auto& p) { n += static_cast<std::size_t>(p.size()); });
    return n;
}

bool GRUWeights::all_finite() const {
    bool ok = true;
    for_each_param(*this, [&](const auto& p) { ok = ok && p.allFinite(); });
    return ok;
}

void validate(const GRUWeights& w) {
    validate(w.dims);
    const int H = w.dims.hidden_size;
    for (std::size_t k = 0; k < kNumLinearBlocks; ++k) {
        auto id = static_cast<BlockId>(k);
        if (w.W[k].rows() != H || w.W[k].cols() != input_width(id, w.dims) || w.b[k].size() != H)
            throw ConfigError("GRU weights: block " + std::string(block_name(id)) +
                              " has the wrong shape");
    }
    if (w.Wc.rows() != w.dims.num_classes || w.Wc.cols() != H ||
        w.bc.size() != w.dims.num_classes)
        throw ConfigError("GRU weights: classifier has the wrong shape");
}

GRUWeights zeros_like(const GRUWeights& w) { return GRUWeights::zeros(w.dims); }

// ---------------------------------------------------------------- forward

Vector gru_step_float(const Vector& x, const Vector& h, const GRUWeights& w) {
    Vector r = sigmoid(w.weight(BlockId::Wir) * x + w.bias(BlockId::Wir) +
                       w.weight(BlockId::Whr) * h + w.bias(BlockId::Whr));
    Vector z = sigmoid(w.weight(BlockId::Wiz) * x + w.bias(BlockId::Wiz) +
                       w.weight(BlockId::Whz) * h + w.bias(BlockId::Whz));
    Vector hn = w.weight(BlockId::Whn) * h + w.bias(BlockId::Whn);
    Vector n = (w.weight(BlockId::Win) * x + w.bias(BlockId::Win) + r.cwiseProduct(hn))
                   .array()
                   .tanh()
                   .matrix();
    return (Vector::Ones(z.size()) - z).cwiseProduct(n) + z.cwiseProduct(h);
}

SequenceBatch make_batch(const SequenceDataset& ds, std::span<const std::size_t> indices) {
    SequenceBatch xs(static_cast<std::size_t>(ds.steps),
                     Matrix(ds.features, static_cast<Eigen::Index>(indices.size())));
    for (std::size_t c = 0; c < indices.size(); ++c)
        for (int t = 0; t < ds.steps; ++t) {
            auto row = ds.row(indices[c], t);
            for (int f = 0; f < ds.features; ++f)
                xs[t](f, static_cast<Eigen::Index>(c)) = row[f];
        }
    return xs;
}

SiteExtrema::SiteExtrema() {
    min.fill(std::numeric_limits<double>::infinity());
    max.fill(-std::numeric_limits<double>::infinity());
}

void SiteExtrema::observe(std::size_t site, const Matrix& values) {
    if (values.size() == 0) return;
    min[site] = std::min(min[site], values.minCoeff());
    max[site] = std::max(max[site], values.maxCoeff());
}

void SiteExtrema::merge(const SiteExtrema& other) {
    for (std::size_t s = 0; s < kNumSites; ++s) {
        min[s] = std::min(min[s], other.min[s]);
        max[s] = std::max(max[s], other.max[s]);
    }
}

Matrix fake_quant(const Matrix& r, const QuantParams& qp) {
    return r.unaryExpr([&](double v) { return dequantize(quantize(v, qp), qp); });
}

Matrix fake_quant_mask(const Matrix& r, const QuantParams& qp) {
    return r.unaryExpr([&](double v) { return (v >= qp.alpha && v <= qp.beta) ? 1.0 : 0.0; });
}

ForwardTrace forward(const GRUWeights& w, const SequenceBatch& xs, const FakeQuantPlan* plan) {
    if (xs.empty()) throw ConfigError("forward: empty sequence");
    const Eigen::Index batch = xs.front().cols();
    const int H = w.dims.hidden_size;

    ForwardTrace trace;
    trace.steps.resize(xs.size());
    trace.h0 = Matrix::Zero(H, batch);
    trace.extrema.observe(idx(BlockId::add_h), trace.h0);

    Matrix h = trace.h0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        if (xs[t].rows() != w.dims.input_features || xs[t].cols() != batch)
            throw ConfigError("forward: input batch has the wrong shape");
        StepTrace& st = trace.steps[t];
        auto site = [&](std::size_t k, Matrix raw) -> Matrix {
            trace.extrema.observe(k, raw);
            if (plan && plan->sites[k]) {
                st.mask[k] = fake_quant_mask(raw, *plan->sites[k]);
                return fake_quant(raw, *plan->sites[k]);
            }
            return raw;
        };
        auto& o = st.out;
        st.h_prev = h;
        st.x = site(kInputSite, xs[t]);
        for (std::size_t k = 0; k < 3; ++k) o[k] = site(k, linear(w.W[k], w.b[k], st.x));
        for (std::size_t k = 3; k < 6; ++k) o[k] = site(k, linear(w.W[k], w.b[k], h));

        o[idx(BlockId::add_r)] = site(idx(BlockId::add_r), o[idx(BlockId::Wir)] + o[idx(BlockId::Whr)]);
        o[idx(BlockId::add_z)] = site(idx(BlockId::add_z), o[idx(BlockId::Wiz)] + o[idx(BlockId::Whz)]);
        st.act_raw[0] = sigmoid(o[idx(BlockId::add_r)]);
        o[idx(BlockId::sig_r)] = site(idx(BlockId::sig_r), st.act_raw[0]);
        st.act_raw[1] = sigmoid(o[idx(BlockId::add_z)]);
        o[idx(BlockId::sig_z)] = site(idx(BlockId::sig_z), st.act_raw[1]);

        o[idx(BlockId::mul_r)] = site(idx(BlockId::mul_r),
                                      o[idx(BlockId::sig_r)].cwiseProduct(o[idx(BlockId::Whn)]));
        o[idx(BlockId::add_n)] = site(idx(BlockId::add_n), o[idx(BlockId::Win)] + o[idx(BlockId::mul_r)]);
        st.act_raw[2] = o[idx(BlockId::add_n)].array().tanh().matrix();
        o[idx(BlockId::tanh_n)] = site(idx(BlockId::tanh_n), st.act_raw[2]);

        o[idx(BlockId::compl_z)] =
            site(idx(BlockId::compl_z), (1.0 - o[idx(BlockId::sig_z)].array()).matrix());
        o[idx(BlockId::mul_new)] = site(idx(BlockId::mul_new),
                                        o[idx(BlockId::compl_z)].cwiseProduct(o[idx(BlockId::tanh_n)]));
        o[idx(BlockId::mul_old)] = site(idx(BlockId::mul_old), o[idx(BlockId::sig_z)].cwiseProduct(h));
        o[idx(BlockId::add_h)] = site(idx(BlockId::add_h), o[idx(BlockId::mul_new)] + o[idx(BlockId::mul_old)]);
        h = o[idx(BlockId::add_h)];
    }
    trace.logits = linear(w.Wc, w.bc, h);
    return trace;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
    double total = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double peak = logits.col(c).maxCoeff();
        const double lse = peak + std::log((logits.col(c).array() - peak).exp().sum());
        total += lse - logits(labels[c], c);
    }
    return total / static_cast<double>(logits.cols());
}

// ---------------------------------------------------------------- backward

double loss_and_gradient(const GRUWeights& w, const SequenceBatch& xs,
                         std::span<const int> labels, GRUWeights& grad,
                         const FakeQuantPlan* plan, SiteExtrema* extrema) {
    ForwardTrace trace = forward(w, xs, plan);
    if (extrema) *extrema = trace.extrema;
    const Eigen::Index batch = trace.logits.cols();
    if (static_cast<Eigen::Index>(labels.size()) != batch)
        throw ConfigError("loss_and_gradient: label count does not match batch");

    const double loss = cross_entropy(trace.logits, labels);

    grad = zeros_like(w);
    Matrix dlogits(trace.logits.rows(), batch);
    for (Eigen::Index c = 0; c < batch; ++c) {
        const double peak = trace.logits.col(c).maxCoeff();
        Vector e = (trace.logits.col(c).array() - peak).exp().matrix();
        dlogits.col(c) = e / e.sum();
        dlogits(labels[c], c) -= 1.0;
    }
    dlogits /= static_cast<double>(batch);

    const Matrix& h_last = trace.steps.back().out[idx(BlockId::add_h)];
    grad.Wc = dlogits * h_last.transpose();
    grad.bc = dlogits.rowwise().sum();
    Matrix dh = w.Wc.transpose() * dlogits;

    for (std::size_t step = trace.steps.size(); step-- > 0;) {
        const StepTrace& st = trace.steps[step];
        const auto& o = st.out;
        auto gate = [&](std::size_t k, Matrix d) -> Matrix {
            if (st.mask[k].size() != 0) return d.cwiseProduct(st.mask[k]);
            return d;
        };

        Matrix d_add_h = gate(idx(BlockId::add_h), dh);
        Matrix d_old = gate(idx(BlockId::mul_old), d_add_h);
        Matrix d_new = gate(idx(BlockId::mul_new), d_add_h);

        Matrix d_sig_z = d_old.cwiseProduct(st.h_prev);
        Matrix dh_prev = d_old.cwiseProduct(o[idx(BlockId::sig_z)]);

        Matrix d_compl = gate(idx(BlockId::compl_z), d_new.cwiseProduct(o[idx(BlockId::tanh_n)]));
        Matrix d_tanh = gate(idx(BlockId::tanh_n), d_new.cwiseProduct(o[idx(BlockId::compl_z)]));
        d_sig_z -= d_compl;

        const Matrix& n_raw = st.act_raw[2];
        Matrix d_add_n = gate(idx(BlockId::add_n),
                              d_tanh.cwiseProduct((1.0 - n_raw.array().square()).matrix()));
        Matrix d_mul_r = gate(idx(BlockId::mul_r), d_add_n);
        Matrix d_sig_r = d_mul_r.cwiseProduct(o[idx(BlockId::Whn)]);
        Matrix d_lin_hn = d_mul_r.cwiseProduct(o[idx(BlockId::sig_r)]);

        const Matrix& z_raw = st.act_raw[1];
        const Matrix& r_raw = st.act_raw[0];
        d_sig_z = gate(idx(BlockId::sig_z), d_sig_z);
        d_sig_r = gate(idx(BlockId::sig_r), d_sig_r);
        Matrix d_add_z = gate(idx(BlockId::add_z),
                              d_sig_z.cwiseProduct((z_raw.array() * (1.0 - z_raw.array())).matrix()));
        Matrix d_add_r = gate(idx(BlockId::add_r),
                              d_sig_r.cwiseProduct((r_raw.array() * (1.0 - r_raw.array())).matrix()));

        std::array<Matrix, kNumLinearBlocks> d_lin = {d_add_r, d_add_z, d_add_n,
                                                      d_add_r, d_add_z, d_lin_hn};
        for (std::size_t k = 0; k < kNumLinearBlocks; ++k) {
            Matrix d = gate(k, d_lin[k]);
            const Matrix& input = k < 3 ? st.x : st.h_prev;
            grad.W[k].noalias() += d * input.transpose();
            grad.b[k] += d.rowwise().sum();
            if (k >= 3) dh_prev.noalias() += w.W[k].transpose() * d;
        }
        dh = std::move(dh_prev);
    }
    return loss;
}

std::vector<int> predict(const GRUWeights& w, const SequenceDataset& ds,
                         const FakeQuantPlan* plan, std::size_t batch_size) {
    std::vector<int> out;
    out.reserve(ds.size());
    std::vector<std::size_t> indices;
    for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
        const std::size_t end = std::min(ds.size(), begin + batch_size);
        indices.clear();
        for (std::size_t i = begin; i < end; ++i) indices.push_back(i);
        ForwardTrace trace = forward(w, make_batch(ds, indices), plan);
        for (Eigen::Index c = 0; c < trace.logits.cols(); ++c) {
            const auto col = trace.logits.col(c);
            out.push_back(argmax(std::vector<double>(col.data(), col.data() + col.size())));
        }
    }
    return out;
}

double accuracy(const GRUWeights& w, const SequenceDataset& ds, const FakeQuantPlan* plan) {
    if (ds.size() == 0) return 0.0;
    auto pred = predict(w, ds, plan);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i];
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------- training

void validate(const TrainConfig& cfg) {
    if (cfg.batch_size < 1 || cfg.epochs < 0 || cfg.validate_every < 1)
        throw ConfigError("train config: batch_size and validate_every must be positive");
    if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction <= 1.0) ||
        !(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0))
        throw ConfigError("train config: fractions must lie in (0,1]");
    if (!(cfg.learning_rate >= 0.0)) throw ConfigError("train config: negative learning rate");
}

namespace {

struct AdamState {
    GRUWeights m;
    GRUWeights v;
    long step = 0;
};

double global_norm(const GRUWeights& g) {
    double sq = 0.0;
    for_each_param(g, [&](const auto& p) { sq += p.squaredNorm(); });
    return std::sqrt(sq);
}

void adam_update(GRUWeights& w, GRUWeights& g, AdamState& st, const TrainConfig& cfg) {
    if (cfg.clip_norm > 0.0) {
        const double norm = global_norm(g);
        if (norm > cfg.clip_norm) {
            const double s = cfg.clip_norm / norm;
            for_each_param(g, [&](auto& p) { p *= s; });
        }
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.step));
    auto params = [](GRUWeights& x) {
        std::vector<double*> ptrs;
        std::vector<Eigen::Index> sizes;
        for_each_param(x, [&](auto& p) {
            ptrs.push_back(p.data());
            sizes.push_back(p.size());
        });
        return std::pair{ptrs, sizes};
    };
    auto [wp, sizes] = params(w);
    auto [gp, gs] = params(g);
    auto [mp, ms] = params(st.m);
    auto [vp, vs] = params(st.v);
    for (std::size_t t = 0; t < wp.size(); ++t)
        for (Eigen::Index i = 0; i < sizes[t]; ++i) {
            const double gi = gp[t][i];
            mp[t][i] = cfg.adam_beta1 * mp[t][i] + (1.0 - cfg.adam_beta1) * gi;
            vp[t][i] = cfg.adam_beta2 * vp[t][i] + (1.0 - cfg.adam_beta2) * gi * gi;
            const double mhat = mp[t][i] / c1;
            const double vhat = vp[t][i] / c2;
            wp[t][i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
        }
}

// Hooks that turn the plain trainer into QAT.
struct QatHooks {
    BitWidths bits{};
    std::array<double, kNumSites> lo{};
    std::array<double, kNumSites> hi{};

    FakeQuantPlan plan() const {
        FakeQuantPlan p;
        for (std::size_t s = 0; s < kNumBlocks; ++s) p.sites[s] = activation_qparams(s, lo[s], hi[s], bits[s]);
        p.sites[kInputSite] = activation_qparams(kInputSite, lo[kInputSite], hi[kInputSite], kInputBits);
        return p;
    }
    void update(const SiteExtrema& batch) {
        for (std::size_t s = 0; s < kNumSites; ++s) {
            if (!batch.seen(s)) continue;
            lo[s] = kQatEmaMomentum * lo[s] + (1.0 - kQatEmaMomentum) * batch.min[s];
            hi[s] = kQatEmaMomentum * hi[s] + (1.0 - kQatEmaMomentum) * batch.max[s];
        }
    }
};

GRUWeights train_loop(const GRUWeights& init, const SequenceDataset& data, const TrainConfig& cfg,
                      TrainReport* report, QatHooks* qat) {
    validate(cfg);
    validate(data);
    validate(init);
    if (data.features != init.dims.input_features || data.classes > init.dims.num_classes)
        throw ConfigError("training data does not match model dimensions");

    const auto order = seeded_permutation(data.size(), cfg.seed);
    const auto n_val = static_cast<std::size_t>(
        std::floor(cfg.validation_fraction * static_cast<double>(data.size())));
    if (n_val == 0 || n_val >= data.size())
        throw ConfigError("validation split of " + std::to_string(n_val) + " samples is unusable");
    const std::size_t pool = data.size() - n_val;
    const std::size_t n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(pool))));
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                                       order.begin() + static_cast<std::ptrdiff_t>(n_val + n_train));
    const SequenceDataset val_set = data.select(val_idx);

    TrainReport local;
    TrainReport& rep = report ? *report : local;
    rep = TrainReport{};
    rep.train_size = train_idx.size();
    rep.validation_size = val_idx.size();

    GRUWeights w = init;
    GRUWeights best = init;
    double best_acc = -1.0;
    AdamState adam{zeros_like(init), zeros_like(init), 0};
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    GRUWeights grad = zeros_like(init);
    std::vector<int> labels;

    auto evaluate = [&](const GRUWeights& weights, const SequenceDataset& ds) {
        if (!qat) return accuracy(weights, ds);
        FakeQuantPlan plan = qat->plan();
        return accuracy(fake_quant_weights(weights, qat->bits), ds, &plan);
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < train_idx.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(train_idx.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::span<const std::size_t> batch_idx(train_idx.data() + begin, end - begin);
            labels.clear();
            for (std::size_t i : batch_idx) labels.push_back(data.labels[i]);
            SequenceBatch xs = make_batch(data, batch_idx);

            double loss;
            if (qat) {
                FakeQuantPlan plan = qat->plan();
                SiteExtrema seen;
                loss = loss_and_gradient(fake_quant_weights(w, qat->bits), xs, labels, grad, &plan, &seen);
                qat->update(seen);
            } else {
                loss = loss_and_gradient(w, xs, labels, grad);
            }
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << batches
                    << " (learning rate " << cfg.learning_rate << ", gradient norm "
                    << global_norm(grad) << ")";
                throw TrainingError(msg.str());
            }
            adam_update(w, grad, adam, cfg);
            loss_sum += loss;
            ++batches;
        }
        rep.epoch_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)));

        if (epoch % cfg.validate_every == 0 || epoch == cfg.epochs) {
            const double acc = evaluate(w, val_set);
            rep.validation.emplace_back(epoch, acc);
            if (acc > best_acc) {
                best_acc = acc;
                best = w;
                rep.best_epoch = epoch;
            }
        }
    }
    rep.best_validation_accuracy = std::max(best_acc, 0.0);
    rep.final_train_accuracy = evaluate(best, data.select(train_idx));
    return best;
}

}  // namespace

GRUWeights train(const GRUWeights& init, const SequenceDataset& data, const TrainConfig& cfg,
                 TrainReport* report) {
    return train_loop(init, data, cfg, report, nullptr);
}

GRUWeights train(const SequenceDataset& data, int hidden_size, const TrainConfig& cfg,
                 TrainReport* report) {
    validate(data);
    ModelDims dims{data.features, hidden_size, data.classes};
    return train(GRUWeights::random_init(dims, cfg.seed), data, cfg, report);
}

GRUWeights fake_quant_weights(const GRUWeights& w, const BitWidths& bits) {
    GRUWeights out = w;
    auto quant = [](Matrix& m, int b) {
        if (m.size() == 0) return;
        QuantParams qp = compute_qparams(m.minCoeff(), m.maxCoeff(), b, QuantMode::symmetric);
        m = m.unaryExpr([&](double v) { return dequantize(quantize_nearest(v, qp), qp); });
    };
    for (std::size_t k = 0; k < kNumLinearBlocks; ++k) quant(out.W[k], bits[k]);
    quant(out.Wc, kClassifierBits);
    return out;
}

GRUWeights qat_finetune(const GRUWeights& w, const BitWidths& bits, const SequenceDataset& data,
                        const TrainConfig& cfg, TrainReport* report) {
    if (cfg.epochs == 0) {
        if (report) *report = TrainReport{};
        return w;
    }
    validate(data);
    QatHooks hooks;
    hooks.bits = bits;
    SiteExtrema seen;
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (std::size_t begin = 0; begin < all.size(); begin += 512) {
        const std::size_t end = std::min(all.size(), begin + 512);
        seen.merge(forward(w, make_batch(data, std::span(all).subspan(begin, end - begin))).extrema);
    }
    hooks.lo = seen.min;
    hooks.hi = seen.max;
    return train_loop(w, data, cfg, report, &hooks);
}

}  // namespace mpgru

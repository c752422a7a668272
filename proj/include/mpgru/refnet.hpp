#pragma once

// Float reference GRU + linear classifier: forward pass with per-block
// traces, hand-derived BPTT, Adam training and quantization-aware
// fine-tuning with fake-quantization nodes at every block output.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mpgru/blocks.hpp"
#include "mpgru/dataio.hpp"
#include "mpgru/fxp.hpp"

namespace mpgru {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GRUWeights {
    ModelDims dims;
    // Indexed by linear BlockId: Wir, Wiz, Win are H x F; Whr, Whz, Whn are H x H.
    std::array<Matrix, kNumLinearBlocks> W;
    std::array<Vector, kNumLinearBlocks> b;
    Matrix Wc;  // C x H
    Vector bc;  // C

    static GRUWeights zeros(const ModelDims& dims);
    // Uniform in +-1/sqrt(H) for every matrix and bias.
    static GRUWeights random_init(const ModelDims& dims, std::uint64_t seed);

    Matrix& weight(BlockId id) { return W[index_of(id)]; }
    const Matrix& weight(BlockId id) const { return W[index_of(id)]; }
    Vector& bias(BlockId id) { return b[index_of(id)]; }
    const Vector& bias(BlockId id) const { return b[index_of(id)]; }

    std::size_t parameter_count() const;
    bool all_finite() const;
};

// Throws ConfigError on inconsistent shapes.
void validate(const GRUWeights& w);

template <class Weights, class Fn>
void for_each_param(Weights& w, Fn&& fn) {
    for (auto& m : w.W) fn(m);
    for (auto& v : w.b) fn(v);
    fn(w.Wc);
    fn(w.bc);
}

// Zero-filled gradient holder with the same shapes as `w`.
GRUWeights zeros_like(const GRUWeights& w);

// One GRU time step for a single sample.
Vector gru_step_float(const Vector& x, const Vector& h, const GRUWeights& w);

// One time step per entry; each matrix is F x B (column = sample).
using SequenceBatch = std::vector<Matrix>;

SequenceBatch make_batch(const SequenceDataset& ds, std::span<const std::size_t> indices);

// Fake-quantization applied to activation sites during a forward pass.
// Sites with no value pass through untouched.
struct FakeQuantPlan {
    std::array<std::optional<QuantParams>, kNumSites> sites;
};

// Per-site extrema of the raw (pre-fake-quant) values seen in a forward
// pass. The hidden site also observes the initial state h0 = 0.
struct SiteExtrema {
    std::array<double, kNumSites> min;
    std::array<double, kNumSites> max;

    SiteExtrema();
    void observe(std::size_t site, const Matrix& values);
    void merge(const SiteExtrema& other);
    bool seen(std::size_t site) const { return min[site] <= max[site]; }
};

struct StepTrace {
    Matrix x;       // fake-quantized input
    Matrix h_prev;  // h_{t-1}
    std::array<Matrix, kNumBlocks> out;  // block outputs after fake-quant
    // Pre-fake-quant activation outputs (sig_r, sig_z, tanh_n) for derivatives.
    std::array<Matrix, 3> act_raw;
    // Straight-through masks (1 inside the clip range), only with a plan.
    std::array<Matrix, kNumSites> mask;
};

struct ForwardTrace {
    std::vector<StepTrace> steps;
    Matrix h0;
    Matrix logits;  // C x B
    SiteExtrema extrema;
};

ForwardTrace forward(const GRUWeights& w, const SequenceBatch& xs,
                     const FakeQuantPlan* plan = nullptr);

// Mean softmax cross-entropy of the final-step logits.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

// Loss and gradient w.r.t. every parameter (BPTT through all steps).
// `extrema`, when given, receives the raw site extrema of the batch.
double loss_and_gradient(const GRUWeights& w, const SequenceBatch& xs,
                         std::span<const int> labels, GRUWeights& grad,
                         const FakeQuantPlan* plan = nullptr, SiteExtrema* extrema = nullptr);

std::vector<int> predict(const GRUWeights& w, const SequenceDataset& ds,
                         const FakeQuantPlan* plan = nullptr, std::size_t batch_size = 512);
double accuracy(const GRUWeights& w, const SequenceDataset& ds,
                const FakeQuantPlan* plan = nullptr);
// Index of the largest entry; ties resolve to the lowest index.
template <class Container>
int argmax(const Container& values) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

// Element-wise quantize/dequantize. The STE backward rule lets gradients
// through where alpha <= r <= beta (see fake_quant_mask).
Matrix fake_quant(const Matrix& r, const QuantParams& qp);
Matrix fake_quant_mask(const Matrix& r, const QuantParams& qp);

struct TrainConfig {
    int batch_size = 256;
    int epochs = 50;
    double learning_rate = 1e-3;
    double validation_fraction = 0.05;
    int validate_every = 5;
    double train_fraction = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double clip_norm = 1.0;  // <= 0 disables clipping
    std::uint64_t seed = 42;
};

void validate(const TrainConfig& cfg);

struct TrainReport {
    std::vector<double> epoch_loss;  // mean training loss per epoch
    std::vector<std::pair<int, double>> validation;  // (epoch, accuracy)
    int best_epoch = 0;
    double best_validation_accuracy = 0.0;
    double final_train_accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Adam on final-step cross-entropy. Returns the weights with the best
// validation accuracy. Throws TrainingError on a non-finite loss.
GRUWeights train(const GRUWeights& init, const SequenceDataset& data, const TrainConfig& cfg,
                 TrainReport* report = nullptr);
GRUWeights train(const SequenceDataset& data, int hidden_size, const TrainConfig& cfg,
                 TrainReport* report = nullptr);

// Quantization-aware fine-tuning. Weights of the six GRU linears are fake-
// quantized symmetrically at their block bit-width (classifier at 8 bits)
// from the current extrema on every step; activation sites use ranges
// tracked with an EMA (momentum 0.9) of batch extrema, seeded by a min/max
// calibration pass over the training split.
GRUWeights qat_finetune(const GRUWeights& w, const BitWidths& bits, const SequenceDataset& data,
                        const TrainConfig& cfg, TrainReport* report = nullptr);

// Symmetric fake-quantization of the six GRU weight matrices at their block
// bit-widths and the classifier at 8 bits. Biases are left in float.
GRUWeights fake_quant_weights(const GRUWeights& w, const BitWidths& bits);

inline constexpr int kInputBits = 8;
inline constexpr int kClassifierBits = 8;
inline constexpr double kQatEmaMomentum = 0.9;

}  // namespace mpgru

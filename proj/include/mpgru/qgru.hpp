#pragma once

// Integer-only GRU cell assembled from the 17 quantized blocks, a quantized
// output classifier, and the model-size objective.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mpgru/blocks.hpp"
#include "mpgru/calib.hpp"
#include "mpgru/qops.hpp"
#include "mpgru/refnet.hpp"

namespace mpgru {

struct QuantizedGRUModel {
    ModelDims dims;
    BitWidths bits{};
    QuantParams input_qp;
    std::array<QLinearParams, kNumLinearBlocks> linear;  // Wir .. Whn
    QAddParams add_r, add_z, add_n, add_h;
    ActivationLUT sig_r, sig_z, tanh_n;
    QMulParams mul_r, mul_new, mul_old;
    QComplParams compl_z;
    // Logits are the raw accumulators on the S_wc * S_h grid; the output
    // grid of this layer is that accumulator grid (unit multiplier).
    QLinearParams classifier;
    // Degenerate-range notices raised while building the grids.
    std::vector<std::string> warnings;

    // The single grid of the recurrent state (output of add_h).
    const QuantParams& hidden_qp() const { return add_h.out_qp; }
    // Output grid of block `id`.
    const QuantParams& out_qp(BlockId id) const;
};

// Throws ConfigError on missing calibration sites or invalid bit-widths and
// FixedPointOverflow when a scale ratio cannot be represented.
QuantizedGRUModel quantize_model(const GRUWeights& w, const CalibrationStats& stats,
                                 const BitWidths& bits);

Codes quantize_input(std::span<const float> x, const QuantizedGRUModel& model);
std::vector<Codes> quantize_sequence(const SequenceDataset& ds, std::size_t sample,
                                     const QuantizedGRUModel& model);

Codes initial_state(const QuantizedGRUModel& model);
Codes qgru_step(std::span<const std::int32_t> q_x, std::span<const std::int32_t> q_h,
                const QuantizedGRUModel& model);

struct Classification {
    std::vector<std::int64_t> logits;
    int label = 0;
};

// Throws ConfigError on an empty sequence.
Classification qgru_classify(std::span<const Codes> sequence, const QuantizedGRUModel& model);

// Fraction of correctly classified sequences.
double quantized_accuracy(const QuantizedGRUModel& model, const SequenceDataset& ds);
std::vector<int> quantized_predict(const QuantizedGRUModel& model, const SequenceDataset& ds);

inline constexpr int kBaselineBits = 16;
inline constexpr int kBiasBits = 32;

// Sum over the six GRU linears and the classifier of
// numel(W) * N_b + numel(b) * 32; N_b = block bit-width for GRU layers,
// 8 for the classifier, 16 for every layer when `baseline` is set.
std::int64_t model_size_bits(const BitWidths& bits, const ModelDims& dims, bool baseline = false);
double size_complement(const BitWidths& bits, const ModelDims& dims);
// Bits spent on the six GRU weight matrices only.
std::int64_t gru_weight_bits(const BitWidths& bits, const ModelDims& dims);

void save_model(const QuantizedGRUModel& model, const std::filesystem::path& path,
                const std::string& config_echo = {});
QuantizedGRUModel load_model(const std::filesystem::path& path);

}  // namespace mpgru

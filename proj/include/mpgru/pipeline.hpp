#pragma once

// Fitness evaluation: genome -> quantized model (PTQ, optionally after QAT)
// -> (validation accuracy, size complement).

#include <functional>
#include <string>

#include "mpgru/calib.hpp"
#include "mpgru/evolve.hpp"
#include "mpgru/qgru.hpp"
#include "mpgru/refnet.hpp"

namespace mpgru {

// Hyper-parameter columns of the training table.
TrainConfig float_train_config();        // FP reference model
TrainConfig homogeneous_qat_config();    // homogeneous baselines
TrainConfig mixed_qat_config();          // per-genome fine-tuning during search

struct EvalContext {
    GRUWeights weights;
    CalibrationStats stats;
    SequenceDataset validation;
    // Training split used for QAT and for recalibrating after it.
    SequenceDataset finetune;
    TrainConfig qat = mixed_qat_config();
    FinetuneMode mode = FinetuneMode::ptq;
    double calibration_fraction = 1.0;
    // Genome -> per-block bit-widths; defaults to to_bits.
    std::function<BitWidths(const Genome&)> decode;
    // Receives one line per failed evaluation; defaults to stderr.
    std::function<void(const std::string&)> log;
};

// Builds the quantized model for `bits`: with QAT, fine-tunes a copy of the
// weights (seeded by `seed`) and recalibrates before quantizing.
QuantizedGRUModel build_quantized(const EvalContext& ctx, const BitWidths& bits, std::uint64_t seed);

// Failures become zero-accuracy evaluations; the error is logged.
Evaluation evaluate(const Genome& genome, const EvalContext& ctx, std::uint64_t stream_seed);

// The returned function holds a reference to `ctx`.
FitnessFunction make_fitness(const EvalContext& ctx);

}  // namespace mpgru

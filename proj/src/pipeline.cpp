#include "mpgru/pipeline.hpp"

#include <iostream>

namespace mpgru {

TrainConfig float_train_config() {
    TrainConfig c;
    c.batch_size = 256;
    c.epochs = 50;
    c.learning_rate = 1e-3;
    c.validation_fraction = 0.05;
    c.validate_every = 5;
    c.train_fraction = 1.0;
    return c;
}

TrainConfig homogeneous_qat_config() {
    TrainConfig c;
    c.batch_size = 1024;
    c.epochs = 30;
    c.learning_rate = 5e-5;
    c.validation_fraction = 0.05;
    c.validate_every = 5;
    c.train_fraction = 1.0;
    return c;
}

TrainConfig mixed_qat_config() {
    TrainConfig c;
    c.batch_size = 1024;
    c.epochs = 12;
    c.learning_rate = 5e-5;
    c.validation_fraction = 0.05;
    c.validate_every = 3;
    c.train_fraction = 0.1;
    return c;
}

QuantizedGRUModel build_quantized(const EvalContext& ctx, const BitWidths& bits, std::uint64_t seed) {
    if (ctx.mode == FinetuneMode::ptq) return quantize_model(ctx.weights, ctx.stats, bits);
    TrainConfig cfg = ctx.qat;
    cfg.seed = seed;
    const GRUWeights tuned = qat_finetune(ctx.weights, bits, ctx.finetune, cfg);
    const CalibrationStats stats = calibrate(tuned, ctx.finetune, ctx.calibration_fraction, seed);
    return quantize_model(tuned, stats, bits);
}

Evaluation evaluate(const Genome& genome, const EvalContext& ctx, std::uint64_t stream_seed) {
    Evaluation e;
    try {
        const BitWidths bits = ctx.decode ? ctx.decode(genome) : to_bits(genome);
        e.size_bits = model_size_bits(bits, ctx.weights.dims);
        e.fitness.size_complement = size_complement(bits, ctx.weights.dims);
        const QuantizedGRUModel model = build_quantized(ctx, bits, stream_seed);
        e.fitness.accuracy = quantized_accuracy(model, ctx.validation);
    } catch (const std::exception& ex) {
        e.failed = true;
        e.error = ex.what();
        e.fitness.accuracy = 0.0;
        const std::string line = "evaluation of genome " + format_genome(genome) + " failed: " + ex.what();
        if (ctx.log) ctx.log(line);
        else std::cerr << line << '\n';
    }
    return e;
}

FitnessFunction make_fitness(const EvalContext& ctx) {
    return [&ctx](const Genome& g, std::uint64_t seed) { return evaluate(g, ctx, seed); };
}

}  // namespace mpgru

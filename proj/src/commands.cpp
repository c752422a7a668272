#include "mpgru/commands.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "mpgru/errors.hpp"
#include "mpgru/refnet_io.hpp"

namespace mpgru {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string bits_string(const BitWidths& bits) {
    std::string s;
    for (std::size_t k = 0; k < bits.size(); ++k) {
        if (k) s += ',';
        s += std::to_string(bits[k]);
    }
    return s;
}

void write_echo(std::ostream& os, const RunConfig& cfg) {
    std::string echo = config_echo(cfg);
    std::size_t pos = 0;
    while (pos < echo.size()) {
        const auto nl = echo.find('\n', pos);
        os << "# " << echo.substr(pos, nl - pos) << '\n';
        pos = nl + 1;
    }
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

void write_csv_header(std::ostream& os, const RunConfig& cfg, std::size_t genes) {
    write_echo(os, cfg);
    os << "generation,index,accuracy,size_bits,size_complement";
    for (std::size_t k = 0; k < genes; ++k) os << ",g" << k;
    os << '\n';
}

void write_csv_row(std::ostream& os, int generation, std::size_t index, const Individual& ind) {
    os << generation << ',' << index << ',' << fmt(ind.fitness.accuracy) << ',' << ind.size_bits << ','
       << fmt(ind.fitness.size_complement);
    for (int g : ind.genome.genes) os << ',' << g;
    os << '\n';
}

struct Resolved {
    BitWidths bits{};
    std::uint64_t seed = 0;
};

Resolved resolve(const RunConfig& cfg, const GenomeChoice& choice) {
    Resolved r;
    r.bits = resolve_bits(choice);
    r.seed = cfg.seed;
    if (choice.scheme) {
        std::ifstream in(*choice.scheme);
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (!j.is_discarded() && j.contains("stream_seed")) r.seed = j["stream_seed"].get<std::uint64_t>();
    }
    return r;
}

EvalContext make_context(const RunConfig& cfg, const TaskData& data, FinetuneMode mode,
                         const TrainConfig& qat) {
    require_file(cfg.weights_path(), "weights file");
    require_file(cfg.stats_path(), "calibration stats file");
    EvalContext ctx;
    ctx.weights = load_weights(cfg.weights_path());
    ctx.stats = load_stats(cfg.stats_path());
    ctx.validation = data.validation;
    ctx.finetune = data.train;
    ctx.qat = cfg.train_config(qat);
    ctx.mode = mode;
    ctx.calibration_fraction = cfg.calibration_fraction;
    if (ctx.weights.dims.input_features != data.train.features ||
        ctx.weights.dims.num_classes < data.train.classes)
        throw ConfigError("weights in " + cfg.weights_path().string() + " do not match the task dimensions");
    return ctx;
}

double agreement(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty()) return 0.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) throw ConfigError(what + " not found: " + path.string());
}

TaskData load_task(const RunConfig& cfg) {
    TaskData d;
    if (cfg.task == TaskKind::synthetic) {
        SyntheticTaskConfig sc = cfg.synthetic;
        sc.seed = cfg.seed;
        const SequenceDataset all = make_synthetic_task(sc);
        const double fractions[] = {0.7, 0.1, 0.2};
        auto parts = split(all, fractions, cfg.seed).parts;
        d.train = std::move(parts[0]);
        d.validation = std::move(parts[1]);
        d.test = std::move(parts[2]);
        d.train.name = "synthetic-train";
        d.validation.name = "synthetic-validation";
        d.test.name = "synthetic-test";
        return d;
    }

    if (cfg.mnist_dir.empty()) throw ConfigError("task mnist-rows requires --mnist-dir");
    require_file(cfg.mnist_dir, "MNIST directory");
    const fs::path files[] = {cfg.mnist_dir / "train-images-idx3-ubyte", cfg.mnist_dir / "train-labels-idx1-ubyte",
                              cfg.mnist_dir / "t10k-images-idx3-ubyte", cfg.mnist_dir / "t10k-labels-idx1-ubyte"};
    for (const auto& f : files) require_file(f, "MNIST file");

    SequenceDataset train_all = load_mnist_idx(files[0], files[1]);
    if (cfg.mnist_train_limit > 0 && cfg.mnist_train_limit < train_all.size()) {
        auto perm = seeded_permutation(train_all.size(), cfg.seed);
        perm.resize(cfg.mnist_train_limit);
        train_all = train_all.select(perm);
    }
    const double fractions[] = {0.9, 0.1};
    auto parts = split(train_all, fractions, cfg.seed).parts;
    d.train = std::move(parts[0]);
    d.validation = std::move(parts[1]);
    d.test = load_mnist_idx(files[2], files[3]);
    d.train.name = "mnist-train";
    d.validation.name = "mnist-validation";
    d.test.name = "mnist-test";
    return d;
}

BitWidths resolve_bits(const GenomeChoice& choice) {
    const int given = int(choice.bits.has_value()) + int(choice.genome.has_value()) + int(choice.scheme.has_value());
    if (given != 1) throw ConfigError("give exactly one of --bits, --genome or --scheme");
    if (choice.bits) {
        if (*choice.bits < kMinBits || *choice.bits > kMaxBits)
            throw ConfigError("--bits must lie in [2,16], got " + std::to_string(*choice.bits));
        return uniform_bits(*choice.bits);
    }
    if (choice.genome) return to_bits(parse_genome(*choice.genome));

    require_file(*choice.scheme, "scheme file");
    std::ifstream in(*choice.scheme);
    try {
        const auto j = nlohmann::json::parse(in);
        Genome g{j.at("genome").get<std::vector<int>>()};
        return to_bits(g);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(choice.scheme->string() + ": " + e.what());
    }
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    const TaskData data = load_task(cfg);
    fs::create_directories(cfg.out);
    TrainReport report;
    const GRUWeights w = train(data.train, cfg.hidden_size, cfg.train_config(cfg.fp), &report);
    const double train_acc = accuracy(w, data.train);
    const double val_acc = accuracy(w, data.validation);
    const double test_acc = accuracy(w, data.test);
    save_weights(w, cfg.weights_path(), config_echo(cfg));
    out << "best_epoch=" << report.best_epoch << '\n'
        << "train_accuracy=" << fmt(train_acc) << '\n'
        << "validation_accuracy=" << fmt(val_acc) << '\n'
        << "test_accuracy=" << fmt(test_acc) << '\n'
        << "weights=" << cfg.weights_path().string() << '\n';
}

void cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
    require_file(cfg.weights_path(), "weights file");
    const TaskData data = load_task(cfg);
    const GRUWeights w = load_weights(cfg.weights_path());
    const CalibrationStats stats = calibrate(w, data.train, cfg.calibration_fraction, cfg.seed);
    fs::create_directories(cfg.stats_path().parent_path().empty() ? fs::path(".") : cfg.stats_path().parent_path());
    save_stats(stats, cfg.stats_path(), config_echo(cfg));
    out << "calibration_samples=" << stats.sample_count << '\n'
        << "stats=" << cfg.stats_path().string() << '\n';
}

void cmd_quantize_eval(const RunConfig& cfg, const GenomeChoice& choice, std::ostream& out) {
    const Resolved r = resolve(cfg, choice);
    const TaskData data = load_task(cfg);
    const EvalContext ctx =
        make_context(cfg, data, choice.qat ? FinetuneMode::qat : FinetuneMode::ptq, cfg.mixed);
    const QuantizedGRUModel model = build_quantized(ctx, r.bits, r.seed);
    const auto q_pred = quantized_predict(model, data.test);
    const auto f_pred = predict(ctx.weights, data.test);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < q_pred.size(); ++i) hits += q_pred[i] == data.test.labels[i];
    for (const auto& w : model.warnings) out << "warning: " << w << '\n';
    out << "genome=" << bits_string(r.bits) << '\n'
        << "float_test_accuracy=" << fmt(accuracy(ctx.weights, data.test)) << '\n'
        << "test_accuracy=" << fmt(static_cast<double>(hits) / static_cast<double>(data.test.size())) << '\n'
        << "float_agreement=" << fmt(agreement(q_pred, f_pred)) << '\n'
        << "size_bits=" << model_size_bits(r.bits, ctx.weights.dims) << '\n'
        << "size_complement=" << fmt(size_complement(r.bits, ctx.weights.dims)) << '\n';
}

void cmd_baseline_sweep(const RunConfig& cfg, bool qat, std::ostream& out) {
    const TaskData data = load_task(cfg);
    const EvalContext ctx =
        make_context(cfg, data, qat ? FinetuneMode::qat : FinetuneMode::ptq, cfg.homogeneous);
    fs::create_directories(cfg.out);
    const fs::path path = cfg.out / "baseline.csv";
    std::ofstream os = open_output(path);
    write_echo(os, cfg);
    os << "bits,validation_accuracy,test_accuracy,size_bits,size_complement\n";
    for (int b = 3; b <= 8; ++b) {
        const BitWidths bits = uniform_bits(b);
        const QuantizedGRUModel model = build_quantized(ctx, bits, cfg.seed);
        const double va = quantized_accuracy(model, data.validation);
        const double ta = quantized_accuracy(model, data.test);
        os << b << ',' << fmt(va) << ',' << fmt(ta) << ',' << model_size_bits(bits, ctx.weights.dims) << ','
           << fmt(size_complement(bits, ctx.weights.dims)) << '\n';
        out << "bits=" << b << " validation_accuracy=" << fmt(va) << " test_accuracy=" << fmt(ta) << '\n';
    }
    out << "baseline=" << path.string() << '\n';
}

std::size_t knee_point(std::span<const Individual> front, double min_complement) {
    std::size_t best = front.size();
    for (std::size_t i = 0; i < front.size(); ++i) {
        const Fitness& f = front[i].fitness;
        if (f.size_complement < min_complement) continue;
        if (best == front.size() || f.accuracy > front[best].fitness.accuracy ||
            (f.accuracy == front[best].fitness.accuracy &&
             f.size_complement > front[best].fitness.size_complement))
            best = i;
    }
    return best;
}

SearchResult cmd_search(const RunConfig& cfg, std::ostream& out, const std::atomic<bool>* stop) {
    const TaskData data = load_task(cfg);
    const SearchConfig sc = cfg.search_config();
    EvalContext ctx = make_context(cfg, data, sc.finetune, cfg.mixed);
    ctx.log = [&out](const std::string& line) { out << "warning: " << line << '\n'; };
    fs::create_directories(cfg.out);

    std::ofstream archive = open_output(cfg.out / "archive.csv");
    write_csv_header(archive, cfg, kNumBlocks);
    archive.flush();

    SearchCallbacks cb;
    cb.stop = stop;
    cb.on_generation = [&](int gen, std::span<const Individual> evaluated) {
        for (std::size_t i = 0; i < evaluated.size(); ++i) write_csv_row(archive, gen, i, evaluated[i]);
        archive.flush();
        double best = 0.0;
        for (const auto& ind : evaluated) best = std::max(best, ind.fitness.accuracy);
        out << "generation " << gen << ": " << evaluated.size() << " new genomes";
        if (!evaluated.empty()) out << ", best new accuracy " << fmt(best);
        out << '\n';
    };
    SearchResult result = run_nsga2(sc, make_fitness(ctx), cb);

    std::ofstream front = open_output(cfg.out / "front.csv");
    write_csv_header(front, cfg, kNumBlocks);
    for (std::size_t i = 0; i < result.front.size(); ++i)
        write_csv_row(front, result.front[i].generation_born, i, result.front[i]);
    front.flush();

    std::size_t pick = knee_point(result.front);
    const bool meets_target = pick < result.front.size();
    if (!meets_target) pick = 0;  // front is sorted by accuracy
    const Individual& chosen = result.front.at(pick);
    const BitWidths bits = to_bits(chosen.genome);
    const std::uint64_t stream = evaluation_seed(sc.seed, chosen.genome, chosen.generation_born);
    const QuantizedGRUModel model = build_quantized(ctx, bits, stream);
    const double test_acc = quantized_accuracy(model, data.test);

    ordered_json scheme;
    scheme["version"] = 1;
    scheme["config"] = config_echo(cfg);
    scheme["genome"] = chosen.genome.genes;
    scheme["validation_accuracy"] = chosen.fitness.accuracy;
    scheme["test_accuracy"] = test_acc;
    scheme["size_bits"] = chosen.size_bits;
    scheme["size_complement"] = chosen.fitness.size_complement;
    scheme["meets_size_target"] = meets_target;
    scheme["generation"] = chosen.generation_born;
    scheme["finetune"] = sc.finetune == FinetuneMode::qat ? "qat" : "ptq";
    scheme["stream_seed"] = stream;
    std::ofstream js = open_output(cfg.out / "scheme.json");
    js << scheme.dump(2) << '\n';

    out << "generations_completed=" << result.generations_completed << '\n'
        << "archive_rows=" << result.archive.size() << '\n'
        << "front_size=" << result.front.size() << '\n'
        << "scheme_genome=" << format_genome(chosen.genome) << '\n'
        << "scheme_test_accuracy=" << fmt(test_acc) << '\n';
    if (!meets_target) out << "warning: no front solution reaches a size complement of 0.25\n";
    return result;
}

void cmd_export(const RunConfig& cfg, const GenomeChoice& choice, std::ostream& out) {
    const Resolved r = resolve(cfg, choice);
    const TaskData data = load_task(cfg);
    const EvalContext ctx =
        make_context(cfg, data, choice.qat ? FinetuneMode::qat : FinetuneMode::ptq, cfg.mixed);
    const QuantizedGRUModel model = build_quantized(ctx, r.bits, r.seed);
    fs::create_directories(cfg.out);
    const fs::path path = cfg.out / "model.json";
    save_model(model, path, config_echo(cfg));
    for (const auto& w : model.warnings) out << "warning: " << w << '\n';
    out << "genome=" << bits_string(r.bits) << '\n' << "model=" << path.string() << '\n';
}

}  // namespace mpgru

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <iostream>

#include "mpgru/commands.hpp"
#include "mpgru/errors.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> task;
    std::optional<std::string> out;
    std::optional<int> jobs;
    std::optional<std::string> mnist_dir;
    std::optional<int> hidden;
    std::optional<std::string> weights;
    std::optional<std::string> stats;
    std::vector<std::string> overrides;
};

mpgru::RunConfig resolve_config(const CommonFlags& f) {
    mpgru::RunConfig cfg;
    if (!f.config.empty()) {
        mpgru::require_file(f.config, "config file");
        mpgru::apply_config_file(cfg, f.config);
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.task) mpgru::set_option(cfg, "task", *f.task);
    if (f.out) cfg.out = *f.out;
    if (f.jobs) cfg.jobs = *f.jobs;
    if (f.mnist_dir) cfg.mnist_dir = *f.mnist_dir;
    if (f.hidden) cfg.hidden_size = *f.hidden;
    if (f.weights) cfg.weights = *f.weights;
    if (f.stats) cfg.stats = *f.stats;
    for (const auto& o : f.overrides) mpgru::apply_override(cfg, o);
    if (cfg.jobs < 1) throw mpgru::ConfigError("--jobs must be >= 1");
    return cfg;
}

void add_choice(CLI::App* cmd, mpgru::GenomeChoice& choice, std::string& finetune) {
    cmd->add_option("--bits", choice.bits, "Homogeneous bit-width for every block (2..16)");
    cmd->add_option("--genome", choice.genome, "17 comma-separated bit-widths in [2,8]");
    cmd->add_option("--scheme", choice.scheme, "Scheme JSON written by search");
    cmd->add_option("--finetune", finetune, "ptq or qat")->check(CLI::IsMember({"ptq", "qat"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Integer-only GRU quantization and mixed-precision bit-width search"};
    app.require_subcommand(1);

    CommonFlags flags;
    app.add_option("--config", flags.config, "key=value configuration file");
    app.add_option("--seed", flags.seed, "Master seed");
    app.add_option("--task", flags.task, "synthetic or mnist-rows");
    app.add_option("--out", flags.out, "Output directory");
    app.add_option("--jobs", flags.jobs, "Parallel fitness evaluations");
    app.add_option("--mnist-dir", flags.mnist_dir, "Directory holding the MNIST IDX files");
    app.add_option("--hidden", flags.hidden, "Hidden size of the GRU");
    app.add_option("--weights", flags.weights, "Float weights file (default <out>/weights.json)");
    app.add_option("--stats", flags.stats, "Calibration stats file (default <out>/stats.json)");
    app.add_option("--set", flags.overrides, "Override a configuration key (key=value), repeatable");

    auto* train = app.add_subcommand("train", "Train the float reference model");
    auto* calib = app.add_subcommand("calibrate", "Record activation ranges on the training split");
    auto* qeval = app.add_subcommand("quantize-eval", "Evaluate one quantized configuration");
    auto* sweep = app.add_subcommand("baseline-sweep", "Homogeneous baselines at 3..8 bits");
    auto* search = app.add_subcommand("search", "NSGA-II mixed-precision search");
    auto* exp = app.add_subcommand("export", "Write a quantized model file");
    for (auto* sub : {train, calib, qeval, sweep, search, exp}) sub->fallthrough();

    mpgru::GenomeChoice qchoice, echoice;
    std::string qft = "ptq", eft = "ptq", sweep_ft = "ptq", search_ft;
    add_choice(qeval, qchoice, qft);
    add_choice(exp, echoice, eft);
    sweep->add_option("--finetune", sweep_ft, "ptq or qat")->check(CLI::IsMember({"ptq", "qat"}));
    search->add_option("--finetune", search_ft, "ptq or qat")->check(CLI::IsMember({"ptq", "qat"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        mpgru::RunConfig cfg = resolve_config(flags);
        if (*train) {
            mpgru::cmd_train(cfg, std::cout);
        } else if (*calib) {
            mpgru::cmd_calibrate(cfg, std::cout);
        } else if (*qeval) {
            qchoice.qat = qft == "qat";
            mpgru::cmd_quantize_eval(cfg, qchoice, std::cout);
        } else if (*sweep) {
            mpgru::cmd_baseline_sweep(cfg, sweep_ft == "qat", std::cout);
        } else if (*search) {
            if (!search_ft.empty()) mpgru::set_option(cfg, "search.finetune", search_ft);
            std::signal(SIGINT, on_sigint);
            mpgru::cmd_search(cfg, std::cout, &g_stop);
        } else if (*exp) {
            echoice.qat = eft == "qat";
            mpgru::cmd_export(cfg, echoice, std::cout);
        }
    } catch (const mpgru::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

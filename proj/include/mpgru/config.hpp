#pragma once

// Run configuration: flat key=value text, every training-table and search
// hyper-parameter addressable by name, command-line overrides on top.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mpgru/dataio.hpp"
#include "mpgru/evolve.hpp"
#include "mpgru/refnet.hpp"

namespace mpgru {

enum class TaskKind { synthetic, mnist_rows };

struct RunConfig {
    TaskKind task = TaskKind::synthetic;
    std::uint64_t seed = 42;
    int hidden_size = 16;
    SyntheticTaskConfig synthetic;
    std::filesystem::path mnist_dir;
    std::size_t mnist_train_limit = 0;  // 0 keeps every training image
    TrainConfig fp;
    TrainConfig homogeneous;
    TrainConfig mixed;
    SearchConfig search;
    double calibration_fraction = 1.0;

    // Location keys; not part of the echo.
    std::filesystem::path out = "out";
    std::filesystem::path weights;  // empty: <out>/weights.json
    std::filesystem::path stats;    // empty: <out>/stats.json
    int jobs = 1;

    RunConfig();

    std::filesystem::path weights_path() const;
    std::filesystem::path stats_path() const;
    // Search settings with the run seed and job count applied.
    SearchConfig search_config() const;
    // Training settings with the run seed applied.
    TrainConfig train_config(const TrainConfig& base) const;
};

// Throws ConfigError on an unknown key or a malformed value.
void set_option(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_option(const RunConfig& cfg, const std::string& key);
std::vector<std::string> option_keys();

// `key = value` lines; '#' starts a comment. Throws ConfigError naming the
// file and line on malformed input, and when the file does not exist.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
// "key=value" override as given on the command line.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Every resolved key except locations and the job count, one "key=value"
// per line, in a fixed order.
std::string config_echo(const RunConfig& cfg);

std::string task_name(TaskKind t);

}  // namespace mpgru

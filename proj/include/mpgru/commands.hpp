#pragma once

// Subcommands behind the mpgru executable. Each writes its artifacts under
// the configured output directory and prints a short report to `out`.

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "mpgru/config.hpp"
#include "mpgru/evolve.hpp"
#include "mpgru/pipeline.hpp"

namespace mpgru {

struct TaskData {
    SequenceDataset train;
    SequenceDataset validation;  // fitness split for the search
    SequenceDataset test;
};

// Synthetic: 70/10/20 split of the generated set. mnist-rows: 90/10 split of
// the (optionally subsampled) training files plus the official test files.
// Missing dataset files raise ConfigError naming the path.
TaskData load_task(const RunConfig& cfg);

// Throws ConfigError naming `path` when it does not exist.
void require_file(const std::filesystem::path& path, const std::string& what);

struct GenomeChoice {
    std::optional<int> bits;             // homogeneous width, 2..16
    std::optional<std::string> genome;   // 17 comma-separated genes in [2,8]
    std::optional<std::filesystem::path> scheme;  // scheme JSON from a search
    bool qat = false;
};

// Resolves exactly one of bits / genome / scheme. Throws ConfigError otherwise.
BitWidths resolve_bits(const GenomeChoice& choice);

void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_calibrate(const RunConfig& cfg, std::ostream& out);
void cmd_quantize_eval(const RunConfig& cfg, const GenomeChoice& choice, std::ostream& out);
void cmd_baseline_sweep(const RunConfig& cfg, bool qat, std::ostream& out);
SearchResult cmd_search(const RunConfig& cfg, std::ostream& out,
                        const std::atomic<bool>* stop = nullptr);
void cmd_export(const RunConfig& cfg, const GenomeChoice& choice, std::ostream& out);

// Knee point: highest accuracy among `front` with size complement >= 0.25
// (ties: larger size complement). Returns front.size() if none qualifies.
std::size_t knee_point(std::span<const Individual> front, double min_complement = 0.25);

}  // namespace mpgru

#pragma once

// Post-training calibration: min/max observers on the 18 activation grids.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "mpgru/blocks.hpp"
#include "mpgru/fxp.hpp"
#include "mpgru/refnet.hpp"

namespace mpgru {

struct SiteStats {
    double min = 0.0;
    double max = 0.0;
    std::uint64_t count = 0;  // number of observed values

    bool operator==(const SiteStats&) const = default;
};

struct CalibrationStats {
    std::array<SiteStats, kNumSites> sites{};
    std::uint64_t sample_count = 0;

    // Associative and commutative.
    void merge(const CalibrationStats& other);
    bool complete() const;
    bool operator==(const CalibrationStats&) const = default;
};

// Runs the float model over the first ceil(fraction * N) sequences of a
// seeded shuffle and records the extrema of every site at every step.
CalibrationStats calibrate(const GRUWeights& w, const SequenceDataset& data, double fraction,
                           std::uint64_t seed = 42, std::size_t batch_size = 256);

// Activation grids for every site: asymmetric at the owning block's
// bit-width (the input site at 8 bits), sigmoid/tanh outputs pinned to
// their analytic ranges. Throws ConfigError if a site was never observed.
std::array<QuantParams, kNumSites> stats_to_qparams(const CalibrationStats& stats,
                                                     const BitWidths& bits);

// Symmetric grid from the extrema of a weight matrix.
QuantParams weight_qparams(const Matrix& w, int bits);

void save_stats(const CalibrationStats& stats, const std::filesystem::path& path,
                const std::string& config_echo = {});
CalibrationStats load_stats(const std::filesystem::path& path);

}  // namespace mpgru

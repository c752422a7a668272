#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "mpgru/calib.hpp"
#include "mpgru/dataio.hpp"
#include "mpgru/refnet.hpp"

namespace testutil {

inline mpgru::SequenceDataset small_task(int classes = 4, int steps = 6, int features = 5, int per_class = 40,
                                         std::uint64_t seed = 1) {
    mpgru::SyntheticTaskConfig c;
    c.num_classes = classes;
    c.steps = steps;
    c.features = features;
    c.per_class = per_class;
    c.seed = seed;
    return mpgru::make_synthetic_task(c);
}

// Every site observed on [lo, hi].
inline mpgru::CalibrationStats flat_stats(double lo, double hi) {
    mpgru::CalibrationStats s;
    for (auto& site : s.sites) site = {lo, hi, 1};
    s.sample_count = 1;
    return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mpgru_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil

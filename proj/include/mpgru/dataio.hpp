#pragma once

// Sequence-classification datasets: MNIST IDX ingestion (row-wise
// sequences), a deterministic synthetic task and seeded splitting.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mpgru {

struct SequenceDataset {
    std::string name;
    int steps = 0;     // T
    int features = 0;  // F
    int classes = 0;   // C
    // Each sequence is T x F, row-major (one row per time step).
    std::vector<std::vector<float>> sequences;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const float> row(std::size_t sample, int t) const {
        return {sequences[sample].data() + static_cast<std::size_t>(t) * features,
                static_cast<std::size_t>(features)};
    }
    // Subset in the given order.
    SequenceDataset select(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> class_histogram() const;
};

// Throws ConfigError if shapes or labels are inconsistent or the set is empty.
void validate(const SequenceDataset& ds);

// Row-wise MNIST: each 28x28 image becomes 28 steps of 28 features in [0,1].
// Throws ParseError naming the byte offset on malformed input.
SequenceDataset load_mnist_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path);

// Writes `ds` as an IDX image/label pair (features scaled by 255 and
// rounded). Requires every feature to be a multiple of 1/255 for an exact
// round trip.
void write_mnist_idx(const SequenceDataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

struct SyntheticTaskConfig {
    int num_classes = 8;
    int steps = 12;
    int features = 8;
    int per_class = 250;
    double noise_std = 0.1;
    std::uint64_t seed = 42;
};

SequenceDataset make_synthetic_task(const SyntheticTaskConfig& cfg);

struct SplitResult {
    std::vector<SequenceDataset> parts;
    std::vector<std::vector<std::size_t>> indices;     // source indices per part
    std::vector<std::vector<std::size_t>> histograms;  // per-class counts per part
};

// Seeded shuffle, then contiguous slices of floor(fraction * N) items.
// Throws ConfigError if fractions sum above 1 or any slice is empty.
SplitResult split(const SequenceDataset& ds, std::span<const double> fractions,
                  std::uint64_t seed);

// Fisher-Yates on 0..n-1 driven by a 64-bit Mersenne Twister.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace mpgru

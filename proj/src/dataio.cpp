#include "mpgru/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "mpgru/errors.hpp"

namespace mpgru {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr int kMnistClasses = 10;
constexpr int kMaxSyntheticClasses = 64;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ByteReader {
public:
    ByteReader(const std::vector<unsigned char>& bytes, std::string what)
        : bytes_(bytes), what_(std::move(what)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) |
                          (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                          (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
        pos_ += 4;
        return v;
    }
    const unsigned char* take(std::size_t n) {
        need(n);
        const unsigned char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::size_t offset() const noexcept { return pos_; }
    [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
        throw ParseError(what_ + ": " + msg + " at byte offset " + std::to_string(at));
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            fail("truncated file (need " + std::to_string(n) + " more bytes, have " +
                     std::to_string(bytes_.size() - pos_) + ")",
                 pos_);
    }

    const std::vector<unsigned char>& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

void put_u32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace

SequenceDataset SequenceDataset::select(std::span<const std::size_t> indices) const {
    SequenceDataset out;
    out.name = name;
    out.steps = steps;
    out.features = features;
    out.classes = classes;
    out.sequences.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        out.sequences.push_back(sequences.at(i));
        out.labels.push_back(labels.at(i));
    }
    return out;
}

std::vector<std::size_t> SequenceDataset::class_histogram() const {
    std::vector<std::size_t> hist(static_cast<std::size_t>(std::max(classes, 0)), 0);
    for (int l : labels)
        if (l >= 0 && l < classes) ++hist[l];
    return hist;
}

void validate(const SequenceDataset& ds) {
    if (ds.labels.empty()) throw ConfigError("dataset '" + ds.name + "' is empty");
    if (ds.steps < 1 || ds.features < 1 || ds.classes < 1)
        throw ConfigError("dataset '" + ds.name + "' has non-positive dimensions");
    if (ds.sequences.size() != ds.labels.size())
        throw ConfigError("dataset '" + ds.name + "' has mismatched sequence/label counts");
    const std::size_t expected = static_cast<std::size_t>(ds.steps) * ds.features;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.sequences[i].size() != expected)
            throw ConfigError("dataset '" + ds.name + "': sequence " + std::to_string(i) +
                              " has the wrong shape");
        if (ds.labels[i] < 0 || ds.labels[i] >= ds.classes)
            throw ConfigError("dataset '" + ds.name + "': label out of range at " +
                              std::to_string(i));
    }
}

SequenceDataset load_mnist_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path) {
    const auto image_bytes = read_file(images_path);
    const auto label_bytes = read_file(labels_path);

    ByteReader images(image_bytes, images_path.string());
    if (std::uint32_t magic = images.u32(); magic != kImageMagic)
        images.fail("bad image magic " + std::to_string(magic), 0);
    const std::uint32_t count = images.u32();
    const std::uint32_t rows = images.u32();
    const std::uint32_t cols = images.u32();
    if (rows == 0 || cols == 0) images.fail("zero image dimensions", 8);

    ByteReader labels(label_bytes, labels_path.string());
    if (std::uint32_t magic = labels.u32(); magic != kLabelMagic)
        labels.fail("bad label magic " + std::to_string(magic), 0);
    const std::uint32_t label_count = labels.u32();
    if (label_count != count)
        labels.fail("label count " + std::to_string(label_count) + " does not match image count " +
                        std::to_string(count),
                    4);

    SequenceDataset ds;
    ds.name = "mnist-rows";
    ds.steps = static_cast<int>(rows);
    ds.features = static_cast<int>(cols);
    ds.classes = kMnistClasses;
    ds.sequences.reserve(count);
    ds.labels.reserve(count);
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    for (std::uint32_t n = 0; n < count; ++n) {
        const unsigned char* px = images.take(pixels);
        std::vector<float> seq(pixels);
        for (std::size_t k = 0; k < pixels; ++k) seq[k] = static_cast<float>(px[k]) / 255.0f;
        ds.sequences.push_back(std::move(seq));
        const int label = *labels.take(1);
        ds.classes = std::max(ds.classes, label + 1);
        ds.labels.push_back(label);
    }
    if (images.offset() != image_bytes.size())
        images.fail("trailing bytes after the last image", images.offset());
    if (labels.offset() != label_bytes.size())
        labels.fail("trailing bytes after the last label", labels.offset());
    return ds;
}

void write_mnist_idx(const SequenceDataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
    validate(ds);
    std::ofstream images(images_path, std::ios::binary);
    std::ofstream labels(labels_path, std::ios::binary);
    if (!images || !labels) throw ParseError("cannot open IDX output files for writing");
    put_u32(images, kImageMagic);
    put_u32(images, static_cast<std::uint32_t>(ds.size()));
    put_u32(images, static_cast<std::uint32_t>(ds.steps));
    put_u32(images, static_cast<std::uint32_t>(ds.features));
    put_u32(labels, kLabelMagic);
    put_u32(labels, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (float v : ds.sequences[i]) {
            long byte = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
            images.put(static_cast<char>(byte));
        }
        labels.put(static_cast<char>(ds.labels[i]));
    }
}

SequenceDataset make_synthetic_task(const SyntheticTaskConfig& cfg) {
    if (cfg.num_classes < 1 || cfg.num_classes > kMaxSyntheticClasses || cfg.steps < 1 ||
        cfg.features < 1 || cfg.per_class < 1 || cfg.noise_std < 0.0)
        throw ConfigError("synthetic task parameters out of range");

    SequenceDataset ds;
    ds.name = "synthetic";
    ds.steps = cfg.steps;
    ds.features = cfg.features;
    ds.classes = cfg.num_classes;

    // Class k: frequency from k mod 4, phase from k div 4.
    const int phase_groups = (cfg.num_classes + 3) / 4;
    std::vector<std::vector<float>> templates(cfg.num_classes);
    for (int k = 0; k < cfg.num_classes; ++k) {
        const double freq = 0.5 + 0.5 * (k % 4);
        const double phase = 2.0 * std::numbers::pi * (k / 4) / phase_groups;
        auto& tpl = templates[k];
        tpl.resize(static_cast<std::size_t>(cfg.steps) * cfg.features);
        for (int t = 0; t < cfg.steps; ++t)
            for (int f = 0; f < cfg.features; ++f) {
                double arg = 2.0 * std::numbers::pi *
                                 (freq * t / cfg.steps + static_cast<double>(f) / cfg.features) +
                             phase;
                tpl[static_cast<std::size_t>(t) * cfg.features + f] =
                    static_cast<float>(0.5 + 0.35 * std::sin(arg));
            }
    }

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t total = static_cast<std::size_t>(cfg.num_classes) * cfg.per_class;
    ds.sequences.reserve(total);
    ds.labels.reserve(total);
    for (int n = 0; n < cfg.per_class; ++n)
        for (int k = 0; k < cfg.num_classes; ++k) {
            std::vector<float> seq = templates[k];
            if (cfg.noise_std > 0.0)
                for (float& v : seq)
                    v = static_cast<float>(
                        std::clamp(static_cast<double>(v) + cfg.noise_std * noise(rng), 0.0, 1.0));
            ds.sequences.push_back(std::move(seq));
            ds.labels.push_back(k);
        }
    return ds;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

SplitResult split(const SequenceDataset& ds, std::span<const double> fractions,
                  std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
        total += f;
    }
    if (total > 1.0 + 1e-9) throw ConfigError("split fractions sum above 1");

    const auto order = seeded_permutation(ds.size(), seed);
    SplitResult result;
    std::size_t begin = 0;
    for (double f : fractions) {
        auto count = static_cast<std::size_t>(std::floor(f * static_cast<double>(ds.size()) + 1e-9));
        if (count == 0)
            throw ConfigError("split fraction " + std::to_string(f) + " yields an empty part of '" +
                              ds.name + "'");
        count = std::min(count, ds.size() - begin);
        std::vector<std::size_t> part(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                      order.begin() + static_cast<std::ptrdiff_t>(begin + count));
        begin += count;
        result.parts.push_back(ds.select(part));
        result.histograms.push_back(result.parts.back().class_histogram());
        result.indices.push_back(std::move(part));
    }
    return result;
}

}  // namespace mpgru

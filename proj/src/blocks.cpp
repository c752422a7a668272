#include "mpgru/blocks.hpp"

#include "mpgru/errors.hpp"

#include <tuple>

namespace mpgru {

namespace {

constexpr std::array<std::string_view, kNumSites> kSiteNames = {
    "Wir",    "Wiz",   "Win",    "Whr",   "Whz",     "Whn",     "add_r",   "add_z",   "add_n",
    "sig_r",  "sig_z", "tanh_n", "mul_r", "compl_z", "mul_new", "mul_old", "add_h",   "input",
};

}  // namespace

std::string_view block_name(BlockId b) noexcept { return kSiteNames[index_of(b)]; }

std::string_view site_name(std::size_t site) noexcept {
    return site < kNumSites ? kSiteNames[site] : std::string_view{};
}

std::optional<std::size_t> site_from_name(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kNumSites; ++i)
        if (kSiteNames[i] == name) return i;
    return std::nullopt;
}

void validate(const ModelDims& dims) {
    if (dims.input_features < 1 || dims.hidden_size < 1 || dims.num_classes < 1)
        throw ConfigError("model dimensions must all be >= 1");
}

BitWidths uniform_bits(int bits) noexcept {
    BitWidths out{};
    out.fill(bits);
    return out;
}

std::optional<std::pair<double, double>> analytic_output_range(std::size_t site) noexcept {
    if (site == index_of(BlockId::sig_r) || site == index_of(BlockId::sig_z))
        return std::pair{0.0, 1.0};
    if (site == index_of(BlockId::tanh_n)) return std::pair{-1.0, 1.0};
    return std::nullopt;
}

QuantParams activation_qparams(std::size_t site, double lo, double hi, int bits) {
    if (auto fixed = analytic_output_range(site)) std::tie(lo, hi) = *fixed;
    return compute_qparams(lo, hi, bits, QuantMode::asymmetric);
}

}  // namespace mpgru

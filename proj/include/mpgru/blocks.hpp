#pragma once

// The 17 quantized building blocks of a GRU cell, in genome order, and the
// 18 activation grids (one per block output plus the cell input).

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <utility>

#include "mpgru/fxp.hpp"

namespace mpgru {

enum class BlockId : int {
    Wir = 0,
    Wiz = 1,
    Win = 2,
    Whr = 3,
    Whz = 4,
    Whn = 5,
    add_r = 6,
    add_z = 7,
    add_n = 8,
    sig_r = 9,
    sig_z = 10,
    tanh_n = 11,
    mul_r = 12,
    compl_z = 13,
    mul_new = 14,
    mul_old = 15,
    add_h = 16,
};

inline constexpr std::size_t kNumBlocks = 17;
inline constexpr std::size_t kNumLinearBlocks = 6;
// Activation grids: blocks 0..16 plus the input x_t.
inline constexpr std::size_t kNumSites = 18;
inline constexpr std::size_t kInputSite = 17;

// One bit-width per block. Genomes restrict these to [2,8]; the quantizer
// accepts anything in [2,16] so wide reference models can be built.
using BitWidths = std::array<int, kNumBlocks>;

struct ModelDims {
    int input_features = 1;
    int hidden_size = 1;
    int num_classes = 1;

    bool operator==(const ModelDims&) const = default;
};

// Throws ConfigError unless every dimension is >= 1.
void validate(const ModelDims& dims);

constexpr std::size_t index_of(BlockId b) noexcept { return static_cast<std::size_t>(b); }

std::string_view block_name(BlockId b) noexcept;
// Name of activation site 0..17 ("input" for the last one).
std::string_view site_name(std::size_t site) noexcept;
std::optional<std::size_t> site_from_name(std::string_view name) noexcept;

constexpr bool is_linear(BlockId b) noexcept { return index_of(b) < kNumLinearBlocks; }

BitWidths uniform_bits(int bits) noexcept;

// Fixed output ranges of the sigmoid ([0,1]) and tanh ([-1,1]) sites.
std::optional<std::pair<double, double>> analytic_output_range(std::size_t site) noexcept;

// Asymmetric grid for an activation site, honoring the analytic override.
QuantParams activation_qparams(std::size_t site, double lo, double hi, int bits);

}  // namespace mpgru

#pragma once

// Float model file: {"version": 1, "dims": {...}, "arrays": {name: [...]}}
// with every array row-major. Array names: W_ir, W_iz, W_in, W_hr, W_hz,
// W_hn, b_ir, ..., b_hn, W_c, b_c.

#include <filesystem>
#include <string>

#include "mpgru/refnet.hpp"

namespace mpgru {

void save_weights(const GRUWeights& w, const std::filesystem::path& path,
                  const std::string& config_echo = {});
GRUWeights load_weights(const std::filesystem::path& path);

}  // namespace mpgru

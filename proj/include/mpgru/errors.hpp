#pragma once

#include <stdexcept>
#include <string>

namespace mpgru {

// Inconsistent shapes, missing calibration sites, malformed genomes and
// similar caller errors.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files (IDX, JSON model/stats files).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mpgru

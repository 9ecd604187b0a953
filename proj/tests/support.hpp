#pragma once

#include <cmath>
#include <string>

#include "coverlab/hitting.hpp"

namespace testing {

inline double zscore(double a, double b, double se) { return se > 0 ? (a - b) / se : (a == b ? 0.0 : INFINITY); }

// Constants cache shipped with the sources (d = 3).
inline coverlab::GreenConstants shipped_constants() {
  return coverlab::load_or_estimate_constants(3, std::string(COVERLAB_SOURCE_DIR) + "/coverlab_constants_d3.json");
}

inline std::string scratch_dir(const std::string& name) { return std::string(COVERLAB_BINARY_DIR) + "/scratch/" + name; }

}  // namespace testing

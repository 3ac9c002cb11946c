#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "geomae/tensor.hpp"

namespace geomae {

// Checkpoint layout: a directory holding
//   manifest.tsv  - one line per array: name dtype rank dim0..dimN offset
//   arrays.bin    - little-endian raw values at the listed byte offsets
// Doubles are written as f64; the round trip is bit-exact.

void save_checkpoint(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, Tensor>>& arrays);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::filesystem::path& dir);

bool checkpoint_exists(const std::filesystem::path& dir);

}  // namespace geomae

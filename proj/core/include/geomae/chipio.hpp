#pragma once

#include <filesystem>

#include "geomae/tensor.hpp"

namespace geomae {

// Chip file layout (all multi-byte fields little-endian):
//   bytes 0..3   magic "CHP1"
//   bytes 4..7   uint32 dtype code (1 = float32)
//   bytes 8..11  uint32 rank
//   then rank * uint32 dims
//   then the row-major float32 payload
// Values are converted from double on write and back on read.

void write_chip(const std::filesystem::path& file, const Tensor& t);
Tensor read_chip(const std::filesystem::path& file);

}  // namespace geomae

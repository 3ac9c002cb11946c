#include "geomae/chipio.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace geomae {

namespace {
static_assert(std::endian::native == std::endian::little, "chip writer assumes little-endian host");
constexpr char kMagic[4] = {'C', 'H', 'P', '1'};
constexpr std::uint32_t kFloat32 = 1;
}  // namespace

void write_chip(const std::filesystem::path& file, const Tensor& t) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("chip: cannot write " + file.string());
  out.write(kMagic, 4);
  const std::uint32_t dtype = kFloat32;
  const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&dtype), 4);
  out.write(reinterpret_cast<const char*>(&rank), 4);
  for (Index d : t.shape) {
    const std::uint32_t dim = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&dim), 4);
  }
  std::vector<float> payload(t.v.size());
  for (std::size_t i = 0; i < t.v.size(); ++i) payload[i] = static_cast<float>(t.v[i]);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw DataError("chip: write failed for " + file.string());
}

Tensor read_chip(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("chip: cannot open " + file.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("chip: bad magic in " + file.string());
  std::uint32_t dtype = 0, rank = 0;
  in.read(reinterpret_cast<char*>(&dtype), 4);
  in.read(reinterpret_cast<char*>(&rank), 4);
  if (!in || dtype != kFloat32 || rank > 8)
    throw DataError("chip: bad header in " + file.string());
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t dim = 0;
    in.read(reinterpret_cast<char*>(&dim), 4);
    shape[i] = static_cast<Index>(dim);
  }
  Tensor t(shape);
  std::vector<float> payload(t.v.size());
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!in) throw DataError("chip: payload truncated in " + file.string());
  for (std::size_t i = 0; i < payload.size(); ++i) t.v[i] = static_cast<double>(payload[i]);
  return t;
}

}  // namespace geomae

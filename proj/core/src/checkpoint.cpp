#include "geomae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace geomae {

namespace {
static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

const char* kManifest = "manifest.tsv";
const char* kBlob = "arrays.bin";
}  // namespace

void save_checkpoint(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, Tensor>>& arrays) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / kManifest);
  std::ofstream blob(dir / kBlob, std::ios::binary);
  if (!manifest || !blob) throw DataError("cannot open checkpoint files in " + dir.string());
  std::size_t offset = 0;
  for (const auto& [name, t] : arrays) {
    GEOMAE_CHECK(name.find_first_of(" \t\n") == std::string::npos,
                 "checkpoint array name contains whitespace: " + name);
    manifest << name << "\tf64\t" << t.rank();
    for (Index d : t.shape) manifest << '\t' << d;
    manifest << '\t' << offset << '\n';
    const std::size_t bytes = t.v.size() * sizeof(double);
    blob.write(reinterpret_cast<const char*>(t.v.data()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  if (!manifest || !blob) throw DataError("checkpoint write failed in " + dir.string());
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / kManifest);
  if (!manifest) throw DataError("checkpoint manifest not found: " + (dir / kManifest).string());
  std::ifstream blob(dir / kBlob, std::ios::binary);
  if (!blob) throw DataError("checkpoint blob not found: " + (dir / kBlob).string());

  std::vector<std::pair<std::string, Tensor>> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, dtype;
    int rank = 0;
    ls >> name >> dtype >> rank;
    if (!ls || dtype != "f64" || rank < 0)
      throw DataError("malformed checkpoint manifest line: " + line);
    Shape shape(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) ls >> shape[static_cast<std::size_t>(i)];
    std::size_t offset = 0;
    ls >> offset;
    if (!ls) throw DataError("malformed checkpoint manifest line: " + line);
    Tensor t(shape);
    blob.seekg(static_cast<std::streamoff>(offset));
    blob.read(reinterpret_cast<char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!blob) throw DataError("checkpoint blob truncated at " + name);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

bool checkpoint_exists(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / kManifest) && std::filesystem::exists(dir / kBlob);
}

}  // namespace geomae

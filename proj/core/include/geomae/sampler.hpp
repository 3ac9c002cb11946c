#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "geomae/posenc.hpp"
#include "geomae/rng.hpp"
#include "geomae/tensor.hpp"

namespace geomae {

/// Per-tile statistics from the land-cover and ecoregion overlays. Class
/// proportions sum to 1 (forest classes arrive pre-merged into two).
struct TileRecord {
  std::string tile_id;
  std::vector<std::pair<std::string, double>> class_props;
  std::set<int> ecoregions;
  double urban_frac = 0.0;
  double lat = 0.0, lon = 0.0;
};

/// One acquisition of a tile with aggregate QA statistics.
struct SceneRecord {
  std::string tile_id;
  Date date;
  double cloud_frac = 0.0;
  double water_frac = 0.0;
  std::vector<double> missing_frac;  // per band
};

/// QA statistics of a patch candidate across its four timestamps.
struct PatchQa {
  std::array<double, 4> cloud{};
  std::array<double, 4> water{};
  std::vector<std::array<double, 4>> missing;  // [band][timestamp]
};

struct PatchRecord {
  std::string tile_id;
  Index area_row = 0, area_col = 0;
  std::array<Date, 4> dates;
  PatchQa qa;
  std::string split;  // "train" or "val"
  bool full_sea = false;
  std::string chip_file;
  double lat = 0.0, lon = 0.0;

  std::string area_id() const {
    return tile_id + ":" + std::to_string(area_row) + ":" + std::to_string(area_col);
  }
  std::string sequence_id() const;
};

/// Shannon entropy of the class distribution, natural log, 0 ln 0 = 0.
double lulc_entropy(const std::vector<std::pair<std::string, double>>& class_props);

/// Calendar-month difference with the day ignored. Day-of-year maps to a
/// month through the non-leap calendar; doy 366 counts as December.
int month_of_doy(int doy);
int month_gap(Date a, Date b);

struct SelectConfig {
  Index tiles_per_class = 100;
  Index pool_size = 500;
  Index urban_tiles = 1000;
  Index entropy_tiles = 1000;
  Index ecoregion_min_tiles = 3;
  double train_frac = 0.95;
};

struct TileSelection {
  std::vector<std::string> train, val;
  std::set<std::string> train_set() const { return {train.begin(), train.end()}; }
};

/// Tile selection: per class, 100 uniform draws from the top-500 pool by
/// class proportion; 1000 top-urban tiles; 1000 top-entropy tiles; then a
/// greedy pass that keeps every sufficiently covered ecoregion in at least
/// three selected tiles; dedup; seeded 95/5 split at tile level.
TileSelection select_tiles(const std::vector<TileRecord>& catalog, const SelectConfig& cfg,
                           Rng& rng);

/// All strictly increasing 4-date sequences with consecutive gaps of one to
/// six calendar months, sampled uniformly without replacement up to `cap`.
std::vector<std::array<Date, 4>> build_sequences(const std::vector<SceneRecord>& scenes, Index cap,
                                                 Rng& rng);

struct FilterThresholds {
  double max_missing = 0.01;
  double max_cloud = 0.20;
};

enum class PatchVerdict { kAccept, kRejectMissing, kRejectCloud };
PatchVerdict filter_patch(const PatchQa& qa, Index bands, const FilterThresholds& thresholds);

/// Fills flagged pixels from the nearest unflagged one: smallest Chebyshev
/// distance, ties resolved in row-major order of the candidate ring.
void fill_missing_nearest(Tensor& grid, const std::vector<std::uint8_t>& missing);

/// Per-area caps (10 train, 2 val by default, seeded down-sampling) and
/// removal of every train record whose area also carries a val record.
std::vector<PatchRecord> cap_and_dedup(std::vector<PatchRecord> accepted, Index train_cap,
                                       Index val_cap, Rng& rng);

/// Keeps records flagged full-sea or belonging to a desert tile with
/// probability `rate`; all other records pass through.
std::vector<PatchRecord> subsample_homogeneous(std::vector<PatchRecord> records,
                                               const std::set<std::string>& desert_tiles,
                                               double rate, Rng& rng);

/// Tiles whose bare-vegetation proportion reaches the threshold.
std::set<std::string> find_desert_tiles(const std::vector<TileRecord>& catalog,
                                        const std::string& desert_class, double min_frac);

struct SamplerConfig {
  SelectConfig select;
  Index train_sequence_cap = 1500;
  Index val_sequence_cap = 250;
  FilterThresholds thresholds;
  Index area_cap_train = 10;
  Index area_cap_val = 2;
  Index areas_per_side = 2;   // desk-scale stand-in for the 256x256 block grid
  Index chip_hw = 32;         // reduced chip resolution for materialized files
  Index chip_frames = 4;
  Index bands = 6;
  double sea_water_threshold = 0.99;
  std::string desert_class = "bare";
  double desert_bare_frac = 0.8;
  double subsample_rate = 0.10;
  bool write_chips = true;
};

struct ClassStat {
  std::string name;
  double catalog_mean = 0.0, train_mean = 0.0, val_mean = 0.0;
};

struct SamplerResult {
  TileSelection tiles;
  std::vector<PatchRecord> records;
  std::vector<ClassStat> class_stats;
};

/// End-to-end pipeline over in-memory catalogs. Chips are materialized under
/// out_dir/chips when cfg.write_chips is set.
SamplerResult run_sampler(const std::vector<TileRecord>& catalog,
                          const std::vector<SceneRecord>& scenes, const SamplerConfig& cfg,
                          std::uint64_t seed, const std::filesystem::path& out_dir);

// Catalog and manifest round trips -----------------------------------------

std::vector<TileRecord> read_catalog_csv(const std::filesystem::path& file);
void write_catalog_csv(const std::filesystem::path& file, const std::vector<TileRecord>& catalog);
std::vector<SceneRecord> read_scenes_csv(const std::filesystem::path& file, Index bands);
void write_scenes_csv(const std::filesystem::path& file, const std::vector<SceneRecord>& scenes);
void write_manifest_csv(const std::filesystem::path& file, const std::vector<PatchRecord>& records,
                        Index bands);
std::vector<PatchRecord> read_manifest_csv(const std::filesystem::path& file, Index bands);
void write_tiles_csv(const std::filesystem::path& file, const TileSelection& tiles);
TileSelection read_tiles_csv(const std::filesystem::path& file);
void write_class_stats_csv(const std::filesystem::path& file, const std::vector<ClassStat>& stats);

// Verifier ------------------------------------------------------------------

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Confirms every sampling constraint on a finished dataset: sequence gaps,
/// QA thresholds, per-area caps, train/val area disjointness, the tile-level
/// split ratio and the per-tile sequence caps.
VerifyReport verify_dataset(const std::vector<PatchRecord>& records, const TileSelection& tiles,
                            const SamplerConfig& cfg);

}  // namespace geomae

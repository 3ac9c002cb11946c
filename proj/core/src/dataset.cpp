#include "geomae/dataset.hpp"

#include <cmath>

#include "geomae/chipio.hpp"
#include "geomae/csvio.hpp"

namespace geomae {

ChipSource PretrainDataset::source(bool use_metadata) const {
  return [this, use_metadata](Index i) {
    GEOMAE_CHECK(i >= 0 && i < size(), "pretrain dataset: index out of range");
    ChipSample s;
    s.chip = chips[static_cast<std::size_t>(i)];
    if (use_metadata) {
      const PatchRecord& r = records[static_cast<std::size_t>(i)];
      GeoTemporalMetadata meta;
      meta.lat = r.lat;
      meta.lon = r.lon;
      for (const auto& d : r.dates) meta.dates.push_back(d);
      s.meta = meta;
    }
    return s;
  };
}

ChannelStats PretrainDataset::compute_stats() const {
  GEOMAE_CHECK(!chips.empty(), "pretrain dataset: no chips for statistics");
  const Index c = chips[0].shape[1];
  std::vector<double> sum(static_cast<std::size_t>(c), 0.0), sq(static_cast<std::size_t>(c), 0.0);
  std::vector<Index> count(static_cast<std::size_t>(c), 0);
  for (const auto& chip : chips) {
    const Index t = chip.shape[0], h = chip.shape[2], w = chip.shape[3];
    for (Index ti = 0; ti < t; ++ti)
      for (Index ci = 0; ci < c; ++ci)
        for (Index y = 0; y < h; ++y)
          for (Index x = 0; x < w; ++x) {
            const double v = chip.at(ti, ci, y, x);
            sum[static_cast<std::size_t>(ci)] += v;
            sq[static_cast<std::size_t>(ci)] += v * v;
            count[static_cast<std::size_t>(ci)] += 1;
          }
  }
  ChannelStats stats;
  for (Index ci = 0; ci < c; ++ci) {
    const double n = static_cast<double>(count[static_cast<std::size_t>(ci)]);
    const double mean = sum[static_cast<std::size_t>(ci)] / n;
    const double var = sq[static_cast<std::size_t>(ci)] / n - mean * mean;
    stats.mean.push_back(mean);
    stats.stdev.push_back(std::sqrt(std::max(var, 1e-12)));
  }
  return stats;
}

PretrainDataset load_pretrain_dataset(const std::filesystem::path& manifest, Index bands,
                                      const std::string& split) {
  PretrainDataset ds;
  ds.root = manifest.parent_path();
  for (auto& r : read_manifest_csv(manifest, bands)) {
    if (!split.empty() && r.split != split) continue;
    ds.records.push_back(std::move(r));
  }
  ds.chips.reserve(ds.records.size());
  for (const auto& r : ds.records) {
    GEOMAE_CHECK(!r.chip_file.empty(), "pretrain dataset: record without chip file");
    ds.chips.push_back(read_chip(ds.root / r.chip_file));
  }
  return ds;
}

std::vector<Index> LabeledDataset::split_indices(const std::string& split) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == split) out.push_back(static_cast<Index>(i));
  return out;
}

Tensor LabeledDataset::load_chip(Index i) const {
  return read_chip(root / items[static_cast<std::size_t>(i)].chip_file);
}

Tensor LabeledDataset::load_mask(Index i) const {
  return read_chip(root / items[static_cast<std::size_t>(i)].mask_file);
}

Tensor LabeledDataset::load_aux(Index i) const {
  return read_chip(root / items[static_cast<std::size_t>(i)].aux_file);
}

void write_labeled_manifest(const std::filesystem::path& manifest, const LabeledDataset& data) {
  CsvTable t;
  t.header = {"chip_id", "file", "label", "mask_file", "aux_file", "target", "year",
              "split",   "has_meta", "lat", "lon", "doy"};
  Index id = 0;
  for (const auto& item : data.items) {
    const double lat = item.meta ? item.meta->lat : 0.0;
    const double lon = item.meta ? item.meta->lon : 0.0;
    const int doy = item.meta && !item.meta->dates.empty() ? item.meta->dates[0].doy : 1;
    t.rows.push_back({std::to_string(id++), item.chip_file, std::to_string(item.label),
                      item.mask_file, item.aux_file, format_double(item.target),
                      std::to_string(item.year), item.split, item.meta ? "1" : "0",
                      format_double(lat), format_double(lon), std::to_string(doy)});
  }
  write_csv(manifest, t);
}

LabeledDataset read_labeled_manifest(const std::filesystem::path& manifest,
                                     const std::string& kind) {
  GEOMAE_CHECK(kind == "classify" || kind == "segment" || kind == "gpp",
               "labeled dataset: unknown kind " + kind);
  const CsvTable t = read_csv(manifest);
  LabeledDataset ds;
  ds.root = manifest.parent_path();
  ds.kind = kind;
  const Index file_col = t.column("file"), label_col = t.column("label");
  const Index mask_col = t.column("mask_file"), aux_col = t.column("aux_file");
  const Index target_col = t.column("target"), year_col = t.column("year");
  const Index split_col = t.column("split"), meta_col = t.column("has_meta");
  const Index lat_col = t.column("lat"), lon_col = t.column("lon"), doy_col = t.column("doy");
  for (Index r = 0; r < t.size(); ++r) {
    const std::string ctx = manifest.string() + " row " + std::to_string(r + 2);
    LabeledChip item;
    item.chip_file = t.cell(r, file_col);
    item.label = parse_int(t.cell(r, label_col), ctx);
    item.mask_file = t.cell(r, mask_col);
    item.aux_file = t.cell(r, aux_col);
    item.target = parse_double(t.cell(r, target_col), ctx);
    item.year = static_cast<int>(parse_int(t.cell(r, year_col), ctx));
    item.split = t.cell(r, split_col);
    if (t.cell(r, meta_col) == "1") {
      GeoTemporalMetadata meta;
      meta.lat = parse_double(t.cell(r, lat_col), ctx);
      meta.lon = parse_double(t.cell(r, lon_col), ctx);
      meta.dates.push_back({item.year, static_cast<int>(parse_int(t.cell(r, doy_col), ctx))});
      item.meta = meta;
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

namespace {

std::string assign_split(Index i, Index n, double val_frac, double test_frac) {
  // deterministic stratified-by-position split
  const Index n_test = static_cast<Index>(std::llround(test_frac * static_cast<double>(n)));
  const Index n_val = static_cast<Index>(std::llround(val_frac * static_cast<double>(n)));
  if (i < n - n_val - n_test) return "train";
  if (i < n - n_test) return "val";
  return "test";
}

}  // namespace

LabeledDataset synth_classify_dataset(const std::filesystem::path& out_dir,
                                      const SynthClassifyOptions& opts, std::uint64_t seed) {
  std::filesystem::create_directories(out_dir / "chips");
  LabeledDataset ds;
  ds.root = out_dir;
  ds.kind = "classify";
  Rng rng(derive_seed(seed, "classify"));
  for (Index i = 0; i < opts.n; ++i) {
    const Index label = i % opts.n_classes;
    // class signal: channel mean level rises with the label
    const double level = 0.2 + 0.6 * static_cast<double>(label) /
                                   static_cast<double>(std::max<Index>(1, opts.n_classes - 1));
    Tensor chip({opts.frames, opts.channels, opts.hw, opts.hw});
    for (double& v : chip.v) v = level + 0.05 * (rng.uniform() - 0.5);
    LabeledChip item;
    item.chip_file = "chips/c" + std::to_string(i) + ".bin";
    item.label = label;
    item.split = assign_split(i, opts.n, opts.val_frac, opts.test_frac);
    write_chip(out_dir / item.chip_file, chip);
    ds.items.push_back(std::move(item));
  }
  write_labeled_manifest(out_dir / "manifest.csv", ds);
  return ds;
}

LabeledDataset synth_segment_dataset(const std::filesystem::path& out_dir,
                                     const SynthSegmentOptions& opts, std::uint64_t seed) {
  std::filesystem::create_directories(out_dir / "chips");
  LabeledDataset ds;
  ds.root = out_dir;
  ds.kind = "segment";
  Rng rng(derive_seed(seed, "segment"));
  for (Index i = 0; i < opts.n; ++i) {
    Tensor chip({opts.frames, opts.channels, opts.hw, opts.hw});
    Tensor mask({opts.hw, opts.hw});
    // half-plane per class band: rows split into n_classes horizontal bands
    // at a random offset, class signal added to every channel
    const Index offset = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(opts.hw)));
    for (Index y = 0; y < opts.hw; ++y)
      for (Index x = 0; x < opts.hw; ++x) {
        const Index band = ((y + offset) % opts.hw) * opts.n_classes / opts.hw;
        mask.at(y, x) = static_cast<double>(band);
        for (Index t = 0; t < opts.frames; ++t)
          for (Index c = 0; c < opts.channels; ++c)
            chip.at(t, c, y, x) = 0.2 + 0.5 * static_cast<double>(band) /
                                            static_cast<double>(std::max<Index>(1, opts.n_classes - 1)) +
                                  0.05 * (rng.uniform() - 0.5);
      }
    LabeledChip item;
    item.chip_file = "chips/s" + std::to_string(i) + ".bin";
    item.mask_file = "chips/s" + std::to_string(i) + "_mask.bin";
    item.split = assign_split(i, opts.n, opts.val_frac, opts.test_frac);
    write_chip(out_dir / item.chip_file, chip);
    write_chip(out_dir / item.mask_file, mask);
    ds.items.push_back(std::move(item));
  }
  write_labeled_manifest(out_dir / "manifest.csv", ds);
  return ds;
}

LabeledDataset synth_gpp_dataset(const std::filesystem::path& out_dir, const SynthGppOptions& opts,
                                 std::uint64_t seed) {
  std::filesystem::create_directories(out_dir / "chips");
  LabeledDataset ds;
  ds.root = out_dir;
  ds.kind = "gpp";
  Rng rng(derive_seed(seed, "gpp"));
  const int n_years = opts.last_year - opts.first_year + 1;
  for (Index i = 0; i < opts.n; ++i) {
    Tensor chip({opts.frames, opts.channels, opts.hw, opts.hw});
    double chip_mean = 0.0;
    for (double& v : chip.v) {
      v = rng.uniform(0.1, 0.9);
      chip_mean += v;
    }
    chip_mean /= static_cast<double>(chip.numel());
    Tensor aux({opts.aux_channels, opts.aux_hw, opts.aux_hw});
    double aux_mean = 0.0;
    for (double& v : aux.v) {
      v = rng.uniform(-1.0, 1.0);
      aux_mean += v;
    }
    aux_mean /= static_cast<double>(aux.numel());

    LabeledChip item;
    item.chip_file = "chips/g" + std::to_string(i) + ".bin";
    item.aux_file = "chips/g" + std::to_string(i) + "_aux.bin";
    item.target = 6.0 * chip_mean + 3.0 * aux_mean + 0.1 * (rng.uniform() - 0.5);
    item.year = opts.first_year + static_cast<int>(i % n_years);
    GeoTemporalMetadata meta;
    meta.lat = rng.uniform(-60.0, 70.0);
    meta.lon = rng.uniform(-179.0, 179.0);
    meta.dates.push_back({item.year, 1 + static_cast<int>(rng.uniform_int(365))});
    item.meta = meta;
    write_chip(out_dir / item.chip_file, chip);
    write_chip(out_dir / item.aux_file, aux);
    ds.items.push_back(std::move(item));
  }
  write_labeled_manifest(out_dir / "manifest.csv", ds);
  return ds;
}

void synth_catalog_csvs(const std::filesystem::path& catalog_csv,
                        const std::filesystem::path& scenes_csv, const SynthCatalogOptions& opts,
                        std::uint64_t seed) {
  const std::vector<std::string> classes = {"forest_closed", "forest_open", "shrubs",
                                            "herbaceous",    "cropland",    "urban",
                                            "bare",          "water"};
  Rng rng(derive_seed(seed, "catalog"));
  std::vector<TileRecord> catalog;
  for (Index i = 0; i < opts.tiles; ++i) {
    TileRecord t;
    t.tile_id = "T" + std::to_string(100000 + i);
    std::vector<double> w(classes.size());
    double sum = 0.0;
    for (auto& x : w) {
      x = rng.uniform();
      x = x * x * x;
      sum += x;
    }
    for (std::size_t c = 0; c < classes.size(); ++c)
      t.class_props.emplace_back(classes[c], w[c] / sum);
    t.urban_frac = t.class_props[5].second;
    const Index n_ecos = 1 + static_cast<Index>(rng.uniform_int(3));
    for (Index e = 0; e < n_ecos; ++e) t.ecoregions.insert(static_cast<int>(rng.uniform_int(846)));
    t.lat = rng.uniform(-60.0, 70.0);
    t.lon = rng.uniform(-179.0, 179.0);
    catalog.push_back(std::move(t));
  }
  write_catalog_csv(catalog_csv, catalog);

  std::vector<SceneRecord> scenes;
  for (const auto& tile : catalog) {
    Rng srng(derive_seed(derive_seed(seed, "scenes"), fnv1a64(tile.tile_id)));
    double water = 0.0;
    for (const auto& [name, p] : tile.class_props)
      if (name == "water") water = p;
    for (int year = opts.first_year; year <= opts.last_year; ++year)
      for (int month = 0; month < 12; ++month) {
        SceneRecord s;
        s.tile_id = tile.tile_id;
        s.date = {year, 10 + month * 30};
        s.cloud_frac = srng.uniform() < 0.8 ? srng.uniform(0.0, 0.15) : srng.uniform(0.25, 0.9);
        s.water_frac = water > 0.5 ? 1.0 : water;
        for (Index b = 0; b < opts.bands; ++b)
          s.missing_frac.push_back(srng.uniform() < 0.9 ? srng.uniform(0.0, 0.008)
                                                        : srng.uniform(0.02, 0.08));
        scenes.push_back(std::move(s));
      }
  }
  write_scenes_csv(scenes_csv, scenes);
}

}  // namespace geomae

#include "geomae/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "geomae/chipio.hpp"
#include "geomae/csvio.hpp"

namespace geomae {

std::string PatchRecord::sequence_id() const {
  std::string s = tile_id;
  for (const auto& d : dates) s += "|" + std::to_string(d.year) + "-" + std::to_string(d.doy);
  return s;
}

double lulc_entropy(const std::vector<std::pair<std::string, double>>& class_props) {
  double h = 0.0;
  for (const auto& [name, p] : class_props) {
    GEOMAE_CHECK(p >= 0.0 && p <= 1.0, "lulc_entropy: proportion out of range for " + name);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

int month_of_doy(int doy) {
  GEOMAE_CHECK(doy >= 1 && doy <= 366, "month_of_doy: day out of range");
  static const int cumulative[12] = {31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334, 365};
  for (int m = 0; m < 12; ++m)
    if (doy <= cumulative[m]) return m + 1;
  return 12;  // doy 366
}

int month_gap(Date a, Date b) {
  const int ma = a.year * 12 + (month_of_doy(a.doy) - 1);
  const int mb = b.year * 12 + (month_of_doy(b.doy) - 1);
  return mb - ma;
}

namespace {

bool date_less(const Date& a, const Date& b) {
  return a.year != b.year ? a.year < b.year : a.doy < b.doy;
}

// Top `count` tile indices under a strict (value desc, tile_id asc) order.
std::vector<Index> top_by(const std::vector<TileRecord>& catalog,
                          const std::vector<double>& value, Index count) {
  std::vector<Index> idx(catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i) idx[i] = static_cast<Index>(i);
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    const double va = value[static_cast<std::size_t>(a)];
    const double vb = value[static_cast<std::size_t>(b)];
    if (va != vb) return va > vb;
    return catalog[static_cast<std::size_t>(a)].tile_id < catalog[static_cast<std::size_t>(b)].tile_id;
  });
  if (static_cast<Index>(idx.size()) > count) idx.resize(static_cast<std::size_t>(count));
  return idx;
}

std::vector<Index> sample_without_replacement(const std::vector<Index>& pool, Index want, Rng& rng) {
  std::vector<Index> copy = pool;
  rng.shuffle(copy);
  if (static_cast<Index>(copy.size()) > want) copy.resize(static_cast<std::size_t>(want));
  return copy;
}

}  // namespace

TileSelection select_tiles(const std::vector<TileRecord>& catalog, const SelectConfig& cfg,
                           Rng& rng) {
  GEOMAE_CHECK(!catalog.empty(), "select_tiles: empty catalog");

  std::set<Index> selected;

  // class names in deterministic order
  std::vector<std::string> classes;
  for (const auto& [name, p] : catalog[0].class_props) classes.push_back(name);
  std::sort(classes.begin(), classes.end());

  for (const auto& cls : classes) {
    std::vector<double> prop(catalog.size(), 0.0);
    for (std::size_t i = 0; i < catalog.size(); ++i)
      for (const auto& [name, p] : catalog[i].class_props)
        if (name == cls) prop[i] = p;
    const auto pool = top_by(catalog, prop, cfg.pool_size);
    for (Index i : sample_without_replacement(pool, cfg.tiles_per_class, rng)) selected.insert(i);
  }

  {
    std::vector<double> urban(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) urban[i] = catalog[i].urban_frac;
    for (Index i : top_by(catalog, urban, cfg.urban_tiles)) selected.insert(i);
  }
  {
    std::vector<double> entropy(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) entropy[i] = lulc_entropy(catalog[i].class_props);
    for (Index i : top_by(catalog, entropy, cfg.entropy_tiles)) selected.insert(i);
  }

  // Ecoregion coverage: every ecoregion present in at least
  // `ecoregion_min_tiles` catalog tiles must reach that count among the
  // selected tiles. Greedy: repeatedly add the unselected tile covering the
  // most still-needy ecoregions.
  {
    std::map<int, Index> catalog_cover;
    for (const auto& t : catalog)
      for (int e : t.ecoregions) catalog_cover[e] += 1;
    std::map<int, Index> selected_cover;
    for (Index i : selected)
      for (int e : catalog[static_cast<std::size_t>(i)].ecoregions) selected_cover[e] += 1;

    auto needy = [&](int e) {
      return catalog_cover[e] >= cfg.ecoregion_min_tiles &&
             selected_cover[e] < cfg.ecoregion_min_tiles;
    };
    while (true) {
      Index best = -1;
      Index best_gain = 0;
      for (std::size_t i = 0; i < catalog.size(); ++i) {
        if (selected.count(static_cast<Index>(i))) continue;
        Index gain = 0;
        for (int e : catalog[i].ecoregions)
          if (needy(e)) ++gain;
        if (gain > best_gain ||
            (gain == best_gain && gain > 0 && best >= 0 &&
             catalog[i].tile_id < catalog[static_cast<std::size_t>(best)].tile_id)) {
          best = static_cast<Index>(i);
          best_gain = gain;
        }
      }
      if (best < 0 || best_gain == 0) break;
      selected.insert(best);
      for (int e : catalog[static_cast<std::size_t>(best)].ecoregions) selected_cover[e] += 1;
    }
  }

  // 95/5 split at tile level, seeded
  std::vector<std::string> ids;
  for (Index i : selected) ids.push_back(catalog[static_cast<std::size_t>(i)].tile_id);
  std::sort(ids.begin(), ids.end());
  rng.shuffle(ids);
  const Index n = static_cast<Index>(ids.size());
  const Index n_train = static_cast<Index>(std::llround(cfg.train_frac * static_cast<double>(n)));
  TileSelection out;
  out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

std::vector<std::array<Date, 4>> build_sequences(const std::vector<SceneRecord>& scenes, Index cap,
                                                 Rng& rng) {
  for (std::size_t i = 1; i < scenes.size(); ++i)
    GEOMAE_CHECK(!date_less(scenes[i].date, scenes[i - 1].date),
                 "build_sequences: scenes must be date-sorted");

  const Index n = static_cast<Index>(scenes.size());
  // successor lists under the 1..6 month gap rule
  std::vector<std::vector<Index>> next(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const int gap = month_gap(scenes[static_cast<std::size_t>(i)].date,
                                scenes[static_cast<std::size_t>(j)].date);
      if (gap >= 1 && gap <= 6) next[static_cast<std::size_t>(i)].push_back(j);
    }

  std::vector<std::array<Index, 4>> candidates;
  for (Index a = 0; a < n; ++a)
    for (Index b : next[static_cast<std::size_t>(a)])
      for (Index c : next[static_cast<std::size_t>(b)])
        for (Index d : next[static_cast<std::size_t>(c)]) candidates.push_back({a, b, c, d});

  rng.shuffle(candidates);
  if (static_cast<Index>(candidates.size()) > cap) candidates.resize(static_cast<std::size_t>(cap));

  std::vector<std::array<Date, 4>> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates)
    out.push_back({scenes[static_cast<std::size_t>(c[0])].date,
                   scenes[static_cast<std::size_t>(c[1])].date,
                   scenes[static_cast<std::size_t>(c[2])].date,
                   scenes[static_cast<std::size_t>(c[3])].date});
  return out;
}

PatchVerdict filter_patch(const PatchQa& qa, Index bands, const FilterThresholds& thresholds) {
  GEOMAE_CHECK(static_cast<Index>(qa.missing.size()) == bands,
               "filter_patch: QA stats must cover every band");
  for (Index b = 0; b < bands; ++b)
    for (int t = 0; t < 4; ++t)
      if (qa.missing[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)] > thresholds.max_missing)
        return PatchVerdict::kRejectMissing;
  for (int t = 0; t < 4; ++t)
    if (qa.cloud[static_cast<std::size_t>(t)] > thresholds.max_cloud)
      return PatchVerdict::kRejectCloud;
  return PatchVerdict::kAccept;
}

void fill_missing_nearest(Tensor& grid, const std::vector<std::uint8_t>& missing) {
  GEOMAE_CHECK(grid.rank() == 2, "fill_missing_nearest: expected [H,W]");
  const Index h = grid.shape[0], w = grid.shape[1];
  GEOMAE_CHECK(static_cast<Index>(missing.size()) == h * w, "fill_missing_nearest: mask size mismatch");
  bool any_valid = false;
  for (std::uint8_t m : missing)
    if (!m) { any_valid = true; break; }
  GEOMAE_CHECK(any_valid, "fill_missing_nearest: no valid pixels to copy from");

  Tensor out = grid;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (!missing[static_cast<std::size_t>(y * w + x)]) continue;
      // expand Chebyshev rings; within a ring, scan row-major
      for (Index r = 1; r < std::max(h, w); ++r) {
        bool found = false;
        for (Index yy = y - r; yy <= y + r && !found; ++yy) {
          if (yy < 0 || yy >= h) continue;
          for (Index xx = x - r; xx <= x + r && !found; ++xx) {
            if (xx < 0 || xx >= w) continue;
            if (std::max(std::abs(yy - y), std::abs(xx - x)) != r) continue;
            if (!missing[static_cast<std::size_t>(yy * w + xx)]) {
              out.at(y, x) = grid.at(yy, xx);
              found = true;
            }
          }
        }
        if (found) break;
      }
    }
  grid = out;
}

std::vector<PatchRecord> cap_and_dedup(std::vector<PatchRecord> accepted, Index train_cap,
                                       Index val_cap, Rng& rng) {
  std::map<std::string, std::vector<std::size_t>> by_area_train, by_area_val;
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    if (accepted[i].split == "val")
      by_area_val[accepted[i].area_id()].push_back(i);
    else
      by_area_train[accepted[i].area_id()].push_back(i);
  }

  std::set<std::size_t> keep;
  auto cap_group = [&](std::map<std::string, std::vector<std::size_t>>& groups, Index cap) {
    for (auto& [area, members] : groups) {
      if (static_cast<Index>(members.size()) > cap) {
        rng.shuffle(members);
        members.resize(static_cast<std::size_t>(cap));
      }
      for (std::size_t i : members) keep.insert(i);
    }
  };
  cap_group(by_area_train, train_cap);
  cap_group(by_area_val, val_cap);

  std::set<std::string> val_areas;
  for (const auto& [area, members] : by_area_val)
    if (!members.empty()) val_areas.insert(area);

  std::vector<PatchRecord> out;
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    if (!keep.count(i)) continue;
    if (accepted[i].split != "val" && val_areas.count(accepted[i].area_id())) continue;
    out.push_back(std::move(accepted[i]));
  }
  return out;
}

std::vector<PatchRecord> subsample_homogeneous(std::vector<PatchRecord> records,
                                               const std::set<std::string>& desert_tiles,
                                               double rate, Rng& rng) {
  GEOMAE_CHECK(rate > 0.0 && rate <= 1.0, "subsample_homogeneous: rate must be in (0,1]");
  if (rate == 1.0) return records;
  std::vector<PatchRecord> out;
  for (auto& r : records) {
    const bool homogeneous = r.full_sea || desert_tiles.count(r.tile_id) > 0;
    if (!homogeneous || rng.uniform() < rate) out.push_back(std::move(r));
  }
  return out;
}

std::set<std::string> find_desert_tiles(const std::vector<TileRecord>& catalog,
                                        const std::string& desert_class, double min_frac) {
  std::set<std::string> out;
  for (const auto& t : catalog)
    for (const auto& [name, p] : t.class_props)
      if (name == desert_class && p >= min_frac) out.insert(t.tile_id);
  return out;
}

namespace {

// Smooth synthetic reflectance for a materialized chip; deterministic in
// (tile, area, dates). One strong per-chip level dominates the variance so
// masked patches are predictable from the visible context.
Tensor synth_chip_values(const PatchRecord& rec, const SamplerConfig& cfg) {
  Rng rng(derive_seed(fnv1a64(rec.sequence_id() + "#" + rec.area_id()), "chip"));
  Tensor chip({cfg.chip_frames, cfg.bands, cfg.chip_hw, cfg.chip_hw});
  const double tau = 6.283185307179586;
  const double level = 0.2 + 0.6 * rng.uniform();
  const double amp = 0.02 + 0.03 * rng.uniform();
  const double fy = 1.0 + std::floor(rng.uniform() * 2.0);
  const double fx = 1.0 + std::floor(rng.uniform() * 2.0);
  const double phase = tau * rng.uniform();
  for (Index t = 0; t < cfg.chip_frames; ++t) {
    const double drift = 0.02 * (rng.uniform() - 0.5);
    for (Index c = 0; c < cfg.bands; ++c) {
      const double channel_offset = 0.01 * static_cast<double>(c);
      for (Index y = 0; y < cfg.chip_hw; ++y)
        for (Index x = 0; x < cfg.chip_hw; ++x)
          chip.at(t, c, y, x) =
              level + drift + channel_offset +
              amp * std::sin(tau * (fy * static_cast<double>(y) +
                                    fx * static_cast<double>(x)) /
                                 static_cast<double>(cfg.chip_hw) +
                             phase) +
              0.01 * (rng.uniform() - 0.5);
    }
  }

  // simulate the per-band missing pixels and fill them by nearest rule
  for (Index t = 0; t < cfg.chip_frames; ++t)
    for (Index c = 0; c < cfg.bands; ++c) {
      const double frac = rec.qa.missing[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
      if (frac <= 0.0) continue;
      std::vector<std::uint8_t> mask(static_cast<std::size_t>(cfg.chip_hw * cfg.chip_hw), 0);
      bool any = false;
      for (auto& m : mask)
        if (rng.uniform() < frac) { m = 1; any = true; }
      if (!any) continue;
      Tensor plane({cfg.chip_hw, cfg.chip_hw});
      for (Index i = 0; i < plane.numel(); ++i) plane[i] = chip.v[static_cast<std::size_t>(((t * cfg.bands + c) * cfg.chip_hw * cfg.chip_hw) + i)];
      fill_missing_nearest(plane, mask);
      for (Index i = 0; i < plane.numel(); ++i) chip.v[static_cast<std::size_t>(((t * cfg.bands + c) * cfg.chip_hw * cfg.chip_hw) + i)] = plane[i];
    }
  return chip;
}

}  // namespace

SamplerResult run_sampler(const std::vector<TileRecord>& catalog,
                          const std::vector<SceneRecord>& scenes, const SamplerConfig& cfg,
                          std::uint64_t seed, const std::filesystem::path& out_dir) {
  SamplerResult result;

  Rng select_rng(derive_seed(seed, "select"));
  result.tiles = select_tiles(catalog, cfg.select, select_rng);
  const auto train_tiles = result.tiles.train_set();
  std::set<std::string> val_tiles(result.tiles.val.begin(), result.tiles.val.end());

  std::map<std::string, std::vector<SceneRecord>> scenes_by_tile;
  for (const auto& s : scenes) scenes_by_tile[s.tile_id].push_back(s);
  for (auto& [tile, list] : scenes_by_tile)
    std::sort(list.begin(), list.end(),
              [](const SceneRecord& a, const SceneRecord& b) { return date_less(a.date, b.date); });

  std::map<std::string, const TileRecord*> tile_by_id;
  for (const auto& t : catalog) tile_by_id[t.tile_id] = &t;

  const std::uint64_t tile_seed = derive_seed(seed, "tile");

  std::vector<PatchRecord> accepted;
  auto process_tile = [&](const std::string& tile_id, bool is_val) {
    auto it = scenes_by_tile.find(tile_id);
    if (it == scenes_by_tile.end()) return;  // no acquisitions, nothing to emit
    const auto& tile_scenes = it->second;
    Rng rng(derive_seed(tile_seed, fnv1a64(tile_id)));
    const Index cap = is_val ? cfg.val_sequence_cap : cfg.train_sequence_cap;
    const auto sequences = build_sequences(tile_scenes, cap, rng);

    std::map<std::pair<int, int>, const SceneRecord*> scene_by_date;
    for (const auto& s : tile_scenes) scene_by_date[{s.date.year, s.date.doy}] = &s;

    for (const auto& seq : sequences) {
      PatchQa qa;
      qa.missing.assign(static_cast<std::size_t>(cfg.bands), {});
      bool sea = true;
      for (int t = 0; t < 4; ++t) {
        const SceneRecord* s = scene_by_date.at({seq[static_cast<std::size_t>(t)].year,
                                                 seq[static_cast<std::size_t>(t)].doy});
        qa.cloud[static_cast<std::size_t>(t)] = s->cloud_frac;
        qa.water[static_cast<std::size_t>(t)] = s->water_frac;
        GEOMAE_CHECK(static_cast<Index>(s->missing_frac.size()) == cfg.bands,
                     "scene QA must cover every band: " + tile_id);
        for (Index b = 0; b < cfg.bands; ++b)
          qa.missing[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)] =
              s->missing_frac[static_cast<std::size_t>(b)];
        if (s->water_frac < cfg.sea_water_threshold) sea = false;
      }
      if (filter_patch(qa, cfg.bands, cfg.thresholds) != PatchVerdict::kAccept) continue;

      const TileRecord* tile = tile_by_id.count(tile_id) ? tile_by_id.at(tile_id) : nullptr;
      for (Index ar = 0; ar < cfg.areas_per_side; ++ar)
        for (Index ac = 0; ac < cfg.areas_per_side; ++ac) {
          PatchRecord rec;
          rec.tile_id = tile_id;
          rec.area_row = ar;
          rec.area_col = ac;
          rec.dates = seq;
          rec.qa = qa;
          rec.split = is_val ? "val" : "train";
          rec.full_sea = sea;
          if (tile) {
            rec.lat = tile->lat;
            rec.lon = tile->lon;
          }
          accepted.push_back(std::move(rec));
        }
    }
  };

  for (const auto& tile : result.tiles.train) process_tile(tile, false);
  for (const auto& tile : result.tiles.val) process_tile(tile, true);

  Rng cap_rng(derive_seed(seed, "cap"));
  auto records = cap_and_dedup(std::move(accepted), cfg.area_cap_train, cfg.area_cap_val, cap_rng);

  const auto deserts = find_desert_tiles(catalog, cfg.desert_class, cfg.desert_bare_frac);
  Rng sub_rng(derive_seed(seed, "subsample"));
  records = subsample_homogeneous(std::move(records), deserts, cfg.subsample_rate, sub_rng);

  if (cfg.write_chips) {
    const auto chip_dir = out_dir / "chips";
    std::filesystem::create_directories(chip_dir);
    Index i = 0;
    for (auto& rec : records) {
      rec.chip_file = "chips/chip_" + std::to_string(i++) + ".bin";
      write_chip(out_dir / rec.chip_file, synth_chip_values(rec, cfg));
    }
  }

  // class distribution of the selection vs the whole catalog
  if (!catalog.empty()) {
    std::map<std::string, ClassStat> stats;
    for (const auto& [name, p] : catalog[0].class_props) stats[name].name = name;
    auto accumulate = [&](const std::set<std::string>& tiles, double ClassStat::*field) {
      for (const auto& t : catalog) {
        if (!tiles.count(t.tile_id)) continue;
        for (const auto& [name, p] : t.class_props) stats[name].*field += p;
      }
      const double n = std::max<double>(1.0, static_cast<double>(tiles.size()));
      for (auto& [name, s] : stats) s.*field /= n;
    };
    for (const auto& t : catalog)
      for (const auto& [name, p] : t.class_props) stats[name].catalog_mean += p;
    for (auto& [name, s] : stats) s.catalog_mean /= static_cast<double>(catalog.size());
    accumulate(train_tiles, &ClassStat::train_mean);
    accumulate(val_tiles, &ClassStat::val_mean);
    for (auto& [name, s] : stats) result.class_stats.push_back(s);
  }

  result.records = std::move(records);
  return result;
}

// ---------------------------------------------------------------------------
// CSV round trips

std::vector<TileRecord> read_catalog_csv(const std::filesystem::path& file) {
  const CsvTable t = read_csv(file);
  const Index id_col = t.column("tile_id");
  const Index lat_col = t.column("lat");
  const Index lon_col = t.column("lon");
  const Index urban_col = t.column("urban_frac");
  const Index eco_col = t.column("ecoregions");
  std::vector<std::pair<std::string, Index>> class_cols;
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i].rfind("class_", 0) == 0)
      class_cols.emplace_back(t.header[i].substr(6), static_cast<Index>(i));

  std::vector<TileRecord> out;
  for (Index r = 0; r < t.size(); ++r) {
    const std::string ctx = file.string() + " row " + std::to_string(r + 2);
    TileRecord rec;
    rec.tile_id = t.cell(r, id_col);
    rec.lat = parse_double(t.cell(r, lat_col), ctx);
    rec.lon = parse_double(t.cell(r, lon_col), ctx);
    rec.urban_frac = parse_double(t.cell(r, urban_col), ctx);
    for (const auto& e : split_list(t.cell(r, eco_col)))
      rec.ecoregions.insert(static_cast<int>(parse_int(e, ctx)));
    for (const auto& [name, col] : class_cols)
      rec.class_props.emplace_back(name, parse_double(t.cell(r, col), ctx));
    out.push_back(std::move(rec));
  }
  return out;
}

void write_catalog_csv(const std::filesystem::path& file, const std::vector<TileRecord>& catalog) {
  CsvTable t;
  t.header = {"tile_id", "lat", "lon", "urban_frac", "ecoregions"};
  if (!catalog.empty())
    for (const auto& [name, p] : catalog[0].class_props) t.header.push_back("class_" + name);
  for (const auto& rec : catalog) {
    std::vector<std::string> row = {rec.tile_id, format_double(rec.lat), format_double(rec.lon),
                                    format_double(rec.urban_frac)};
    std::string ecos;
    for (int e : rec.ecoregions) ecos += (ecos.empty() ? "" : ";") + std::to_string(e);
    row.push_back(ecos);
    for (const auto& [name, p] : rec.class_props) row.push_back(format_double(p));
    t.rows.push_back(std::move(row));
  }
  write_csv(file, t);
}

std::vector<SceneRecord> read_scenes_csv(const std::filesystem::path& file, Index bands) {
  const CsvTable t = read_csv(file);
  const Index id_col = t.column("tile_id");
  const Index year_col = t.column("year");
  const Index doy_col = t.column("doy");
  const Index cloud_col = t.column("cloud_frac");
  const Index water_col = t.column("water_frac");
  std::vector<Index> miss_cols;
  for (Index b = 0; b < bands; ++b) miss_cols.push_back(t.column("miss_b" + std::to_string(b)));

  std::vector<SceneRecord> out;
  for (Index r = 0; r < t.size(); ++r) {
    const std::string ctx = file.string() + " row " + std::to_string(r + 2);
    SceneRecord rec;
    rec.tile_id = t.cell(r, id_col);
    rec.date.year = static_cast<int>(parse_int(t.cell(r, year_col), ctx));
    rec.date.doy = static_cast<int>(parse_int(t.cell(r, doy_col), ctx));
    rec.cloud_frac = parse_double(t.cell(r, cloud_col), ctx);
    rec.water_frac = parse_double(t.cell(r, water_col), ctx);
    for (Index b = 0; b < bands; ++b)
      rec.missing_frac.push_back(parse_double(t.cell(r, miss_cols[static_cast<std::size_t>(b)]), ctx));
    out.push_back(std::move(rec));
  }
  return out;
}

void write_scenes_csv(const std::filesystem::path& file, const std::vector<SceneRecord>& scenes) {
  CsvTable t;
  t.header = {"tile_id", "year", "doy", "cloud_frac", "water_frac"};
  const Index bands = scenes.empty() ? 0 : static_cast<Index>(scenes[0].missing_frac.size());
  for (Index b = 0; b < bands; ++b) t.header.push_back("miss_b" + std::to_string(b));
  for (const auto& s : scenes) {
    std::vector<std::string> row = {s.tile_id, std::to_string(s.date.year),
                                    std::to_string(s.date.doy), format_double(s.cloud_frac),
                                    format_double(s.water_frac)};
    for (double m : s.missing_frac) row.push_back(format_double(m));
    t.rows.push_back(std::move(row));
  }
  write_csv(file, t);
}

void write_manifest_csv(const std::filesystem::path& file, const std::vector<PatchRecord>& records,
                        Index bands) {
  CsvTable t;
  t.header = {"chip_id", "file", "tile_id", "area_row", "area_col", "split", "full_sea", "lat", "lon"};
  for (int i = 0; i < 4; ++i) {
    t.header.push_back("year" + std::to_string(i));
    t.header.push_back("doy" + std::to_string(i));
  }
  for (int i = 0; i < 4; ++i) t.header.push_back("cloud_t" + std::to_string(i));
  for (Index b = 0; b < bands; ++b)
    for (int i = 0; i < 4; ++i)
      t.header.push_back("miss_b" + std::to_string(b) + "_t" + std::to_string(i));

  Index id = 0;
  for (const auto& r : records) {
    std::vector<std::string> row = {std::to_string(id++), r.chip_file, r.tile_id,
                                    std::to_string(r.area_row), std::to_string(r.area_col),
                                    r.split, r.full_sea ? "1" : "0", format_double(r.lat),
                                    format_double(r.lon)};
    for (const auto& d : r.dates) {
      row.push_back(std::to_string(d.year));
      row.push_back(std::to_string(d.doy));
    }
    for (double c : r.qa.cloud) row.push_back(format_double(c));
    for (Index b = 0; b < bands; ++b)
      for (int i = 0; i < 4; ++i)
        row.push_back(format_double(r.qa.missing[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]));
    t.rows.push_back(std::move(row));
  }
  write_csv(file, t);
}

std::vector<PatchRecord> read_manifest_csv(const std::filesystem::path& file, Index bands) {
  const CsvTable t = read_csv(file);
  std::vector<PatchRecord> out;
  const Index file_col = t.column("file");
  const Index tile_col = t.column("tile_id");
  const Index ar_col = t.column("area_row");
  const Index ac_col = t.column("area_col");
  const Index split_col = t.column("split");
  const Index sea_col = t.column("full_sea");
  const Index lat_col = t.column("lat");
  const Index lon_col = t.column("lon");
  for (Index r = 0; r < t.size(); ++r) {
    const std::string ctx = file.string() + " row " + std::to_string(r + 2);
    PatchRecord rec;
    rec.chip_file = t.cell(r, file_col);
    rec.tile_id = t.cell(r, tile_col);
    rec.area_row = parse_int(t.cell(r, ar_col), ctx);
    rec.area_col = parse_int(t.cell(r, ac_col), ctx);
    rec.split = t.cell(r, split_col);
    rec.full_sea = t.cell(r, sea_col) == "1";
    rec.lat = parse_double(t.cell(r, lat_col), ctx);
    rec.lon = parse_double(t.cell(r, lon_col), ctx);
    for (int i = 0; i < 4; ++i) {
      rec.dates[static_cast<std::size_t>(i)].year =
          static_cast<int>(parse_int(t.cell(r, t.column("year" + std::to_string(i))), ctx));
      rec.dates[static_cast<std::size_t>(i)].doy =
          static_cast<int>(parse_int(t.cell(r, t.column("doy" + std::to_string(i))), ctx));
      rec.qa.cloud[static_cast<std::size_t>(i)] =
          parse_double(t.cell(r, t.column("cloud_t" + std::to_string(i))), ctx);
    }
    rec.qa.missing.assign(static_cast<std::size_t>(bands), {});
    for (Index b = 0; b < bands; ++b)
      for (int i = 0; i < 4; ++i)
        rec.qa.missing[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)] = parse_double(
            t.cell(r, t.column("miss_b" + std::to_string(b) + "_t" + std::to_string(i))), ctx);
    out.push_back(std::move(rec));
  }
  return out;
}

void write_tiles_csv(const std::filesystem::path& file, const TileSelection& tiles) {
  CsvTable t;
  t.header = {"tile_id", "split"};
  for (const auto& id : tiles.train) t.rows.push_back({id, "train"});
  for (const auto& id : tiles.val) t.rows.push_back({id, "val"});
  write_csv(file, t);
}

TileSelection read_tiles_csv(const std::filesystem::path& file) {
  const CsvTable t = read_csv(file);
  const Index id_col = t.column("tile_id");
  const Index split_col = t.column("split");
  TileSelection out;
  for (Index r = 0; r < t.size(); ++r)
    (t.cell(r, split_col) == "val" ? out.val : out.train).push_back(t.cell(r, id_col));
  return out;
}

void write_class_stats_csv(const std::filesystem::path& file, const std::vector<ClassStat>& stats) {
  CsvTable t;
  t.header = {"class", "catalog_mean", "train_mean", "val_mean"};
  for (const auto& s : stats)
    t.rows.push_back({s.name, format_double(s.catalog_mean), format_double(s.train_mean),
                      format_double(s.val_mean)});
  write_csv(file, t);
}

// ---------------------------------------------------------------------------
// verifier

VerifyReport verify_dataset(const std::vector<PatchRecord>& records, const TileSelection& tiles,
                            const SamplerConfig& cfg) {
  VerifyReport report;
  auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    report.checks.push_back({name, pass, detail});
  };

  Index bad_gaps = 0;
  for (const auto& r : records)
    for (int i = 0; i < 3; ++i) {
      const int gap = month_gap(r.dates[static_cast<std::size_t>(i)],
                                r.dates[static_cast<std::size_t>(i + 1)]);
      if (gap < 1 || gap > 6) ++bad_gaps;
    }
  add("sequence gaps in [1,6] months", bad_gaps == 0, std::to_string(bad_gaps) + " violations");

  Index bad_missing = 0, bad_cloud = 0;
  for (const auto& r : records) {
    for (const auto& band : r.qa.missing)
      for (double m : band)
        if (m > cfg.thresholds.max_missing) ++bad_missing;
    for (double c : r.qa.cloud)
      if (c > cfg.thresholds.max_cloud) ++bad_cloud;
  }
  add("missing fraction <= 1% per band", bad_missing == 0, std::to_string(bad_missing) + " violations");
  add("cloud fraction <= 20% per timestamp", bad_cloud == 0, std::to_string(bad_cloud) + " violations");

  std::map<std::string, Index> train_per_area, val_per_area;
  for (const auto& r : records)
    (r.split == "val" ? val_per_area : train_per_area)[r.area_id()] += 1;
  Index over_train = 0, over_val = 0;
  for (const auto& [area, n] : train_per_area)
    if (n > cfg.area_cap_train) ++over_train;
  for (const auto& [area, n] : val_per_area)
    if (n > cfg.area_cap_val) ++over_val;
  add("per-area cap (train <= " + std::to_string(cfg.area_cap_train) + ")", over_train == 0,
      std::to_string(over_train) + " areas over cap");
  add("per-area cap (val <= " + std::to_string(cfg.area_cap_val) + ")", over_val == 0,
      std::to_string(over_val) + " areas over cap");

  Index overlaps = 0;
  for (const auto& [area, n] : train_per_area)
    if (val_per_area.count(area)) ++overlaps;
  add("train/val area overlap", overlaps == 0, std::to_string(overlaps) + " shared areas");

  const Index n_tiles = static_cast<Index>(tiles.train.size() + tiles.val.size());
  const Index expect_train =
      static_cast<Index>(std::llround(cfg.select.train_frac * static_cast<double>(n_tiles)));
  add("tile split ratio",
      static_cast<Index>(tiles.train.size()) == expect_train,
      std::to_string(tiles.train.size()) + " train of " + std::to_string(n_tiles));

  std::map<std::string, std::set<std::string>> sequences_per_tile;
  for (const auto& r : records) sequences_per_tile[r.tile_id].insert(r.sequence_id());
  const std::set<std::string> val_tiles(tiles.val.begin(), tiles.val.end());
  Index over_cap = 0;
  for (const auto& [tile, seqs] : sequences_per_tile) {
    const Index cap = val_tiles.count(tile) ? cfg.val_sequence_cap : cfg.train_sequence_cap;
    if (static_cast<Index>(seqs.size()) > cap) ++over_cap;
  }
  add("per-tile sequence caps (1500 train / 250 val)", over_cap == 0,
      std::to_string(over_cap) + " tiles over cap");

  return report;
}

}  // namespace geomae

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geomae/sampler.hpp"
#include "geomae/trainer.hpp"

namespace geomae {

/// Pretraining dataset backed by a sampler manifest. Chips are preloaded
/// into memory (desk scale).
struct PretrainDataset {
  std::filesystem::path root;
  std::vector<PatchRecord> records;   // train split only
  std::vector<Tensor> chips;

  Index size() const { return static_cast<Index>(records.size()); }
  ChipSource source(bool use_metadata) const;
  ChannelStats compute_stats() const;
};

PretrainDataset load_pretrain_dataset(const std::filesystem::path& manifest, Index bands,
                                      const std::string& split = "train");

/// One supervised example. Unused fields stay empty per task kind.
struct LabeledChip {
  std::string chip_file;
  Index label = 0;           // classify
  std::string mask_file;     // segment
  std::string aux_file;      // gpp
  double target = 0.0;       // gpp
  int year = 0;              // gpp (leave-one-year-out)
  std::string split;         // train | val | test (empty for gpp)
  std::optional<GeoTemporalMetadata> meta;
};

struct LabeledDataset {
  std::filesystem::path root;
  std::string kind;  // classify | segment | gpp
  std::vector<LabeledChip> items;

  std::vector<Index> split_indices(const std::string& split) const;
  Tensor load_chip(Index i) const;        // [T,C,H,W]
  Tensor load_mask(Index i) const;        // [H,W] (segment)
  Tensor load_aux(Index i) const;         // [K,h,w] (gpp)
};

void write_labeled_manifest(const std::filesystem::path& manifest, const LabeledDataset& data);
LabeledDataset read_labeled_manifest(const std::filesystem::path& manifest,
                                     const std::string& kind);

// Synthetic supervised datasets with a learnable signal ---------------------

struct SynthClassifyOptions {
  Index n = 96;
  Index n_classes = 4;
  Index frames = 1, channels = 6, hw = 32;
  double val_frac = 0.25, test_frac = 0.25;
};
LabeledDataset synth_classify_dataset(const std::filesystem::path& out_dir,
                                      const SynthClassifyOptions& opts, std::uint64_t seed);

struct SynthSegmentOptions {
  Index n = 48;
  Index n_classes = 2;
  Index frames = 1, channels = 6, hw = 32;
  double val_frac = 0.25, test_frac = 0.25;
};
LabeledDataset synth_segment_dataset(const std::filesystem::path& out_dir,
                                     const SynthSegmentOptions& opts, std::uint64_t seed);

struct SynthGppOptions {
  Index n = 64;
  Index frames = 1, channels = 6, hw = 32;
  Index aux_channels = 10, aux_hw = 4;
  int first_year = 2018, last_year = 2021;
};
LabeledDataset synth_gpp_dataset(const std::filesystem::path& out_dir, const SynthGppOptions& opts,
                                 std::uint64_t seed);

/// Synthetic tile catalog and scene index for the sampling pipeline.
struct SynthCatalogOptions {
  Index tiles = 2000;
  Index bands = 6;
  int first_year = 2020, last_year = 2021;  // monthly acquisitions
};
void synth_catalog_csvs(const std::filesystem::path& catalog_csv,
                        const std::filesystem::path& scenes_csv, const SynthCatalogOptions& opts,
                        std::uint64_t seed);

}  // namespace geomae

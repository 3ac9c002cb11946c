#pragma once

#include <cstdint>
#include <vector>

#include "geomae/posenc.hpp"
#include "geomae/rng.hpp"
#include "geomae/tensor.hpp"

namespace geomae {

/// Spatiotemporal patch extents. The temporal extent is fixed at 1; the API
/// keeps the field for forward compatibility but rejects anything else.
struct PatchSize {
  Index pt = 1, ph = 16, pw = 16;
  Index pixels(Index channels) const { return pt * ph * pw * channels; }
  bool operator==(const PatchSize&) const = default;
};

/// Multi-temporal multispectral chip batch [B, T, C, H, W] with optional
/// per-sample geotemporal metadata (empty, or one entry per sample).
struct ReflectanceBatch {
  Tensor values;
  std::vector<GeoTemporalMetadata> meta;

  Index batch() const { return values.shape[0]; }
  Index frames() const { return values.shape[1]; }
  Index channels() const { return values.shape[2]; }
  Index height() const { return values.shape[3]; }
  Index width() const { return values.shape[4]; }
};

/// Per-sample random permutation, keep count and restore indices for MAE
/// masking. restore is the inverse of shuffle; a token l is visible iff
/// restore[b][l] < keep.
struct MaskPlan {
  Index keep = 0;
  std::vector<std::vector<Index>> shuffle;
  std::vector<std::vector<Index>> restore;
  std::vector<std::vector<std::uint8_t>> mask;  // true = masked

  std::vector<std::vector<Index>> kept_indices() const;
};

GridDims grid_dims_of(const Tensor& values, PatchSize patch);

/// [B,T,C,H,W] -> [B, L, ph*pw*C]. Token l holds the pixel block of frame t,
/// spatial block (i, j), flattened in (row, col, channel) order.
Tensor patchify_pixels(const Tensor& values, PatchSize patch);

/// Exact inverse of patchify_pixels (pure reindexing, no arithmetic).
Tensor unpatchify(const Tensor& token_pixels, GridDims dims, PatchSize patch, Index channels);

/// Builds a per-sample uniform masking plan. keep = round(L * (1 - ratio)).
/// sample_seeds has one entry per batch element so shards reproduce the
/// batch-level draw.
MaskPlan make_mask_plan(Index batch, Index tokens, double ratio,
                        std::span<const std::uint64_t> sample_seeds);
MaskPlan make_mask_plan(Index batch, Index tokens, double ratio, std::uint64_t seed);

/// Applies a plan to a token tensor [B, L, D]: visible tokens in shuffled
/// order, [B, keep, D].
Tensor apply_mask_plan(const Tensor& tokens, const MaskPlan& plan);

/// random_masking composed: plan + gathered visible tokens.
std::pair<Tensor, MaskPlan> random_masking(const Tensor& tokens, double ratio, std::uint64_t seed);

}  // namespace geomae

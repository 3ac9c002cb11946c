#pragma once

#include <string>
#include <vector>

#include "geomae/mae.hpp"

namespace geomae {

/// Encoder output at mask ratio 0: one latent row per token.
struct LatentGrid {
  Var data;  // [B, L, dim]
  GridDims dims;
};

/// How a multi-temporal latent feeds a 2D head: take the last frame's token
/// map, or stack all frames along the channel axis (T * dim channels).
enum class TemporalMode { kLastFrame, kConcatTime };

/// [B, L, dim] -> [B, C, Gh, Gw] feature maps under the chosen mode.
Var latent_to_feature_map(const LatentGrid& latent, TemporalMode mode);

/// Mean pool over tokens, then an affine map (optionally through extra
/// hidden layers when depth > 1, matching the tunable decoder depth).
class ClassifyHead {
 public:
  ClassifyHead(Index latent_dim, Index n_classes, Index depth, std::uint64_t init_seed);
  Var forward(const LatentGrid& latent) const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  Index depth_;
  ParamStore params_;
};

/// Four stride-2 transposed-convolution blocks (x16 upsampling), each with
/// per-position channel layer norm and GELU, then a 1x1 classifier, then a
/// bilinear resize whenever 16 * Gh differs from the target size.
class SegmentDeconvHead {
 public:
  SegmentDeconvHead(Index in_channels, Index n_classes, std::uint64_t init_seed);
  Var forward(const LatentGrid& latent, Index out_h, Index out_w, TemporalMode mode) const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  static std::vector<Index> channel_plan(Index in_channels);

 private:
  Index in_channels_, n_classes_;
  ParamStore params_;
};

/// Nearest-neighbor x2 upsampling alternated with 3x3 convolution blocks
/// until the grid reaches the target, then a 1x1 classifier (and a bilinear
/// resize when the doubled grid overshoots). extra_convs adds 3x3 blocks at
/// full resolution; it is the tunable decoder depth for this head.
class SegmentConvUpHead {
 public:
  SegmentConvUpHead(Index in_channels, Index n_classes, Index target_hw, Index grid_hw,
                    Index extra_convs, std::uint64_t init_seed);
  Var forward(const LatentGrid& latent, Index out_h, Index out_w, TemporalMode mode) const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  static Index blocks_needed(Index grid, Index target);

 private:
  Index in_channels_, n_classes_, n_blocks_, extra_convs_;
  ParamStore params_;
};

/// Pixel-level weighted cross-entropy over [B, K, H, W] logits.
Var segmentation_loss(const Var& logits, const std::vector<Index>& labels,
                      const std::vector<double>& class_weights);

/// Two-branch regressor: latent tokens through two token-wise linear+ReLU
/// layers then flattened; auxiliary variables through three 3x3 conv+ReLU
/// layers and a linear+ReLU; both flattened, concatenated, and mapped to one
/// scalar per sample. The encoder branch stays frozen.
class GppRegressor {
 public:
  struct Config {
    Index latent_dim = 64;
    Index tokens = 16;
    Index hidden1 = 64;
    Index hidden2 = 32;
    Index aux_channels = 10;
    Index aux_h = 4, aux_w = 4;
    Index conv_channels1 = 32, conv_channels2 = 64, conv_channels3 = 64;
    Index aux_out = 32;
  };
  GppRegressor(const Config& cfg, std::uint64_t init_seed);
  /// latent must be detached from the backbone (frozen encoder contract).
  Var forward(const LatentGrid& latent, const Var& aux) const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  Config cfg_;
  ParamStore params_;
};

enum class ResampleMode { kResizeBilinear, kCenterCrop, kUpscaleNearest };

/// Deterministic spatial resampling of a [T,C,H,W] chip. Bilinear uses the
/// align-corners-false convention; upscale is nearest-neighbor.
Tensor prepare_chip(const Tensor& chip, Index target_h, Index target_w, ResampleMode mode);

}  // namespace geomae

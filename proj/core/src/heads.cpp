#include "geomae/heads.hpp"

#include <cmath>

namespace geomae {

namespace {

Var add_params(ParamStore& store, const ParamSpec& spec, std::uint64_t seed) {
  return store.add(spec.name, default_param_init(spec, seed));
}

// Channel layer norm for [B,C,H,W] maps: normalize across C at each spatial
// position.
Var channel_layernorm(const Var& x, const Var& gamma, const Var& beta) {
  Var t = permute(x, {0, 2, 3, 1});
  t = layernorm_lastdim(t, gamma, beta);
  return permute(t, {0, 3, 1, 2});
}

}  // namespace

Var latent_to_feature_map(const LatentGrid& latent, TemporalMode mode) {
  const Index b = latent.data->val.shape[0];
  const Index dim = latent.data->val.shape[2];
  const GridDims& d = latent.dims;
  GEOMAE_CHECK(latent.data->val.shape[1] == d.tokens(), "latent token count mismatch");
  if (mode == TemporalMode::kLastFrame) {
    Var frame = slice_rows(latent.data, (d.t - 1) * d.gh * d.gw, d.gh * d.gw);
    frame = reshape(frame, {b, d.gh, d.gw, dim});
    return permute(frame, {0, 3, 1, 2});
  }
  Var all = reshape(latent.data, {b, d.t, d.gh, d.gw, dim});
  all = permute(all, {0, 1, 4, 2, 3});  // [B, T, dim, Gh, Gw]
  return reshape(all, {b, d.t * dim, d.gh, d.gw});
}

// ---------------------------------------------------------------------------

ClassifyHead::ClassifyHead(Index latent_dim, Index n_classes, Index depth, std::uint64_t init_seed)
    : depth_(depth) {
  GEOMAE_CHECK(depth >= 1, "ClassifyHead: depth must be >= 1");
  Index in = latent_dim;
  for (Index i = 0; i + 1 < depth; ++i) {
    add_params(params_, {"head.fc" + std::to_string(i) + ".weight", {latent_dim, in}}, init_seed);
    add_params(params_, {"head.fc" + std::to_string(i) + ".bias", {latent_dim}}, init_seed);
    in = latent_dim;
  }
  add_params(params_, {"head.out.weight", {n_classes, in}}, init_seed);
  add_params(params_, {"head.out.bias", {n_classes}}, init_seed);
}

Var ClassifyHead::forward(const LatentGrid& latent) const {
  Var x = mean_axis1(latent.data);
  for (Index i = 0; i + 1 < depth_; ++i) {
    x = linear(x, params_.get("head.fc" + std::to_string(i) + ".weight"),
               params_.get("head.fc" + std::to_string(i) + ".bias"));
    x = relu(x);
  }
  return linear(x, params_.get("head.out.weight"), params_.get("head.out.bias"));
}

// ---------------------------------------------------------------------------

std::vector<Index> SegmentDeconvHead::channel_plan(Index in_channels) {
  std::vector<Index> plan;
  Index c = in_channels;
  for (int i = 0; i < 4; ++i) {
    c = std::max<Index>(c / 2, 16);
    plan.push_back(c);
  }
  return plan;
}

SegmentDeconvHead::SegmentDeconvHead(Index in_channels, Index n_classes, std::uint64_t init_seed)
    : in_channels_(in_channels), n_classes_(n_classes) {
  const auto plan = channel_plan(in_channels);
  Index c = in_channels;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "head.deconv" + std::to_string(i) + ".";
    add_params(params_, {p + "weight", {c, plan[static_cast<std::size_t>(i)], 2, 2}}, init_seed);
    add_params(params_, {p + "bias", {plan[static_cast<std::size_t>(i)]}}, init_seed);
    add_params(params_, {p + "ln.gamma", {plan[static_cast<std::size_t>(i)]}}, init_seed);
    add_params(params_, {p + "ln.beta", {plan[static_cast<std::size_t>(i)]}}, init_seed);
    c = plan[static_cast<std::size_t>(i)];
  }
  add_params(params_, {"head.classifier.weight", {n_classes, c, 1, 1}}, init_seed);
  add_params(params_, {"head.classifier.bias", {n_classes}}, init_seed);
}

Var SegmentDeconvHead::forward(const LatentGrid& latent, Index out_h, Index out_w,
                               TemporalMode mode) const {
  GEOMAE_CHECK(out_h >= latent.dims.gh && out_w >= latent.dims.gw,
               "segment head: target size smaller than the token grid");
  Var x = latent_to_feature_map(latent, mode);
  GEOMAE_CHECK(x->val.shape[1] == in_channels_, "segment head: channel count mismatch");
  for (int i = 0; i < 4; ++i) {
    const std::string p = "head.deconv" + std::to_string(i) + ".";
    x = conv_transpose2d(x, params_.get(p + "weight"), params_.get(p + "bias"), 2);
    x = channel_layernorm(x, params_.get(p + "ln.gamma"), params_.get(p + "ln.beta"));
    x = gelu(x);
  }
  x = conv2d(x, params_.get("head.classifier.weight"), params_.get("head.classifier.bias"), 1, 0);
  if (x->val.shape[2] != out_h || x->val.shape[3] != out_w)
    x = resize_bilinear(x, out_h, out_w);
  return x;
}

// ---------------------------------------------------------------------------

Index SegmentConvUpHead::blocks_needed(Index grid, Index target) {
  GEOMAE_CHECK(grid >= 1 && target >= grid, "segment head: target size smaller than the token grid");
  Index n = 0;
  Index size = grid;
  while (size < target) {
    size *= 2;
    ++n;
  }
  return n;
}

SegmentConvUpHead::SegmentConvUpHead(Index in_channels, Index n_classes, Index target_hw,
                                     Index grid_hw, Index extra_convs, std::uint64_t init_seed)
    : in_channels_(in_channels),
      n_classes_(n_classes),
      n_blocks_(blocks_needed(grid_hw, target_hw)),
      extra_convs_(extra_convs) {
  Index c = in_channels;
  for (Index i = 0; i < n_blocks_; ++i) {
    const std::string p = "head.up" + std::to_string(i) + ".";
    const Index next = std::max<Index>(c / 2, 16);
    add_params(params_, {p + "weight", {next, c, 3, 3}}, init_seed);
    add_params(params_, {p + "bias", {next}}, init_seed);
    add_params(params_, {p + "ln.gamma", {next}}, init_seed);
    add_params(params_, {p + "ln.beta", {next}}, init_seed);
    c = next;
  }
  for (Index i = 0; i < extra_convs_; ++i) {
    const std::string p = "head.conv" + std::to_string(i) + ".";
    add_params(params_, {p + "weight", {c, c, 3, 3}}, init_seed);
    add_params(params_, {p + "bias", {c}}, init_seed);
  }
  add_params(params_, {"head.classifier.weight", {n_classes, c, 1, 1}}, init_seed);
  add_params(params_, {"head.classifier.bias", {n_classes}}, init_seed);
}

Var SegmentConvUpHead::forward(const LatentGrid& latent, Index out_h, Index out_w,
                               TemporalMode mode) const {
  GEOMAE_CHECK(out_h >= latent.dims.gh && out_w >= latent.dims.gw,
               "segment head: target size smaller than the token grid");
  Var x = latent_to_feature_map(latent, mode);
  GEOMAE_CHECK(x->val.shape[1] == in_channels_, "segment head: channel count mismatch");
  for (Index i = 0; i < n_blocks_; ++i) {
    const std::string p = "head.up" + std::to_string(i) + ".";
    x = upsample_nearest2(x);
    x = conv2d(x, params_.get(p + "weight"), params_.get(p + "bias"), 1, 1);
    x = channel_layernorm(x, params_.get(p + "ln.gamma"), params_.get(p + "ln.beta"));
    x = gelu(x);
  }
  for (Index i = 0; i < extra_convs_; ++i) {
    const std::string p = "head.conv" + std::to_string(i) + ".";
    x = gelu(conv2d(x, params_.get(p + "weight"), params_.get(p + "bias"), 1, 1));
  }
  x = conv2d(x, params_.get("head.classifier.weight"), params_.get("head.classifier.bias"), 1, 0);
  if (x->val.shape[2] != out_h || x->val.shape[3] != out_w)
    x = resize_bilinear(x, out_h, out_w);
  return x;
}

// ---------------------------------------------------------------------------

Var segmentation_loss(const Var& logits, const std::vector<Index>& labels,
                      const std::vector<double>& class_weights) {
  GEOMAE_CHECK(logits->val.rank() == 4, "segmentation_loss expects [B,K,H,W]");
  const Index b = logits->val.shape[0], k = logits->val.shape[1];
  const Index h = logits->val.shape[2], w = logits->val.shape[3];
  Var flat = reshape(permute(logits, {0, 2, 3, 1}), {b * h * w, k});
  return weighted_cross_entropy(flat, labels, class_weights);
}

// ---------------------------------------------------------------------------

GppRegressor::GppRegressor(const Config& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  add_params(params_, {"head.hls.fc0.weight", {cfg.hidden1, cfg.latent_dim}}, init_seed);
  add_params(params_, {"head.hls.fc0.bias", {cfg.hidden1}}, init_seed);
  add_params(params_, {"head.hls.fc1.weight", {cfg.hidden2, cfg.hidden1}}, init_seed);
  add_params(params_, {"head.hls.fc1.bias", {cfg.hidden2}}, init_seed);
  add_params(params_, {"head.aux.conv0.weight", {cfg.conv_channels1, cfg.aux_channels, 3, 3}}, init_seed);
  add_params(params_, {"head.aux.conv0.bias", {cfg.conv_channels1}}, init_seed);
  add_params(params_, {"head.aux.conv1.weight", {cfg.conv_channels2, cfg.conv_channels1, 3, 3}}, init_seed);
  add_params(params_, {"head.aux.conv1.bias", {cfg.conv_channels2}}, init_seed);
  add_params(params_, {"head.aux.conv2.weight", {cfg.conv_channels3, cfg.conv_channels2, 3, 3}}, init_seed);
  add_params(params_, {"head.aux.conv2.bias", {cfg.conv_channels3}}, init_seed);
  add_params(params_, {"head.aux.fc.weight", {cfg.aux_out, cfg.conv_channels3 * cfg.aux_h * cfg.aux_w}}, init_seed);
  add_params(params_, {"head.aux.fc.bias", {cfg.aux_out}}, init_seed);
  add_params(params_, {"head.out.weight", {1, cfg.tokens * cfg.hidden2 + cfg.aux_out}}, init_seed);
  add_params(params_, {"head.out.bias", {1}}, init_seed);
}

Var GppRegressor::forward(const LatentGrid& latent, const Var& aux) const {
  GEOMAE_CHECK(!latent.data->requires_grad,
               "GppRegressor: encoder branch must be frozen (detached latent)");
  const Index b = latent.data->val.shape[0];
  const Index l = latent.data->val.shape[1];
  GEOMAE_CHECK(l == cfg_.tokens, "GppRegressor: token count mismatch");
  GEOMAE_CHECK(latent.data->val.shape[2] == cfg_.latent_dim, "GppRegressor: latent dim mismatch");
  GEOMAE_CHECK(aux->val.rank() == 4 && aux->val.shape[0] == b &&
                   aux->val.shape[1] == cfg_.aux_channels && aux->val.shape[2] == cfg_.aux_h &&
                   aux->val.shape[3] == cfg_.aux_w,
               "GppRegressor: aux variable shape mismatch");

  Var h = reshape(latent.data, {b * l, cfg_.latent_dim});
  h = relu(linear(h, params_.get("head.hls.fc0.weight"), params_.get("head.hls.fc0.bias")));
  h = relu(linear(h, params_.get("head.hls.fc1.weight"), params_.get("head.hls.fc1.bias")));
  h = reshape(h, {b, l * cfg_.hidden2});

  Var a = relu(conv2d(aux, params_.get("head.aux.conv0.weight"), params_.get("head.aux.conv0.bias"), 1, 1));
  a = relu(conv2d(a, params_.get("head.aux.conv1.weight"), params_.get("head.aux.conv1.bias"), 1, 1));
  a = relu(conv2d(a, params_.get("head.aux.conv2.weight"), params_.get("head.aux.conv2.bias"), 1, 1));
  a = reshape(a, {b, cfg_.conv_channels3 * cfg_.aux_h * cfg_.aux_w});
  a = relu(linear(a, params_.get("head.aux.fc.weight"), params_.get("head.aux.fc.bias")));

  Var joint = concat({h, a}, 1);
  Var out = linear(joint, params_.get("head.out.weight"), params_.get("head.out.bias"));
  return reshape(out, {b});
}

// ---------------------------------------------------------------------------

Tensor prepare_chip(const Tensor& chip, Index target_h, Index target_w, ResampleMode mode) {
  GEOMAE_CHECK(chip.rank() == 4, "prepare_chip: chip must be [T,C,H,W]");
  GEOMAE_CHECK(target_h > 0 && target_w > 0, "prepare_chip: bad target size");
  const Index t = chip.shape[0], c = chip.shape[1], h = chip.shape[2], w = chip.shape[3];
  switch (mode) {
    case ResampleMode::kResizeBilinear:
      return resize_bilinear(constant(chip), target_h, target_w)->val;
    case ResampleMode::kCenterCrop: {
      GEOMAE_CHECK(target_h <= h && target_w <= w, "prepare_chip: crop larger than input");
      const Index oy = (h - target_h) / 2, ox = (w - target_w) / 2;
      Tensor out({t, c, target_h, target_w});
      for (Index ti = 0; ti < t; ++ti)
        for (Index ci = 0; ci < c; ++ci)
          for (Index y = 0; y < target_h; ++y)
            for (Index x = 0; x < target_w; ++x)
              out.at(ti, ci, y, x) = chip.at(ti, ci, oy + y, ox + x);
      return out;
    }
    case ResampleMode::kUpscaleNearest: {
      Tensor out({t, c, target_h, target_w});
      for (Index ti = 0; ti < t; ++ti)
        for (Index ci = 0; ci < c; ++ci)
          for (Index y = 0; y < target_h; ++y) {
            const Index sy = std::min<Index>(h - 1, static_cast<Index>((static_cast<double>(y) + 0.5) *
                                                                       static_cast<double>(h) /
                                                                       static_cast<double>(target_h)));
            for (Index x = 0; x < target_w; ++x) {
              const Index sx = std::min<Index>(w - 1, static_cast<Index>((static_cast<double>(x) + 0.5) *
                                                                         static_cast<double>(w) /
                                                                         static_cast<double>(target_w)));
              out.at(ti, ci, y, x) = chip.at(ti, ci, sy, sx);
            }
          }
      return out;
    }
  }
  invalid("prepare_chip: unknown mode");
}

}  // namespace geomae

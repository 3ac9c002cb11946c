#include "geomae/patchify.hpp"

#include <cmath>

namespace geomae {

std::vector<std::vector<Index>> MaskPlan::kept_indices() const {
  std::vector<std::vector<Index>> kept(shuffle.size());
  for (std::size_t b = 0; b < shuffle.size(); ++b)
    kept[b].assign(shuffle[b].begin(), shuffle[b].begin() + static_cast<std::ptrdiff_t>(keep));
  return kept;
}

GridDims grid_dims_of(const Tensor& values, PatchSize patch) {
  GEOMAE_CHECK(values.rank() == 5, "expected [B,T,C,H,W], got " + shape_str(values.shape));
  GEOMAE_CHECK(patch.pt == 1, "temporal patch extent must be 1");
  GEOMAE_CHECK(patch.ph >= 1 && patch.pw >= 1, "patch extents must be positive");
  const Index h = values.shape[3], w = values.shape[4];
  GEOMAE_CHECK(h % patch.ph == 0 && w % patch.pw == 0,
               "spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                   " not divisible by patch " + std::to_string(patch.ph) + "x" +
                   std::to_string(patch.pw));
  return GridDims{values.shape[1], h / patch.ph, w / patch.pw};
}

Tensor patchify_pixels(const Tensor& values, PatchSize patch) {
  const GridDims dims = grid_dims_of(values, patch);
  const Index b = values.shape[0], c = values.shape[2];
  const Index p = patch.pixels(c);
  Tensor out({b, dims.tokens(), p});
  for (Index bi = 0; bi < b; ++bi) {
    Index l = 0;
    for (Index t = 0; t < dims.t; ++t)
      for (Index gi = 0; gi < dims.gh; ++gi)
        for (Index gj = 0; gj < dims.gw; ++gj, ++l) {
          Index e = 0;
          for (Index r = 0; r < patch.ph; ++r)
            for (Index cc = 0; cc < patch.pw; ++cc)
              for (Index ch = 0; ch < c; ++ch, ++e)
                out.at(bi, l, e) = values.at(bi, t, ch, gi * patch.ph + r, gj * patch.pw + cc);
        }
  }
  return out;
}

Tensor unpatchify(const Tensor& token_pixels, GridDims dims, PatchSize patch, Index channels) {
  GEOMAE_CHECK(token_pixels.rank() == 3, "unpatchify: expected [B,L,P]");
  GEOMAE_CHECK(patch.pt == 1, "temporal patch extent must be 1");
  GEOMAE_CHECK(token_pixels.shape[1] == dims.tokens(), "unpatchify: token count mismatch");
  GEOMAE_CHECK(token_pixels.shape[2] == patch.pixels(channels), "unpatchify: pixel dim mismatch");
  const Index b = token_pixels.shape[0];
  Tensor out({b, dims.t, channels, dims.gh * patch.ph, dims.gw * patch.pw});
  for (Index bi = 0; bi < b; ++bi) {
    Index l = 0;
    for (Index t = 0; t < dims.t; ++t)
      for (Index gi = 0; gi < dims.gh; ++gi)
        for (Index gj = 0; gj < dims.gw; ++gj, ++l) {
          Index e = 0;
          for (Index r = 0; r < patch.ph; ++r)
            for (Index cc = 0; cc < patch.pw; ++cc)
              for (Index ch = 0; ch < channels; ++ch, ++e)
                out.at(bi, t, ch, gi * patch.ph + r, gj * patch.pw + cc) = token_pixels.at(bi, l, e);
        }
  }
  return out;
}

MaskPlan make_mask_plan(Index batch, Index tokens, double ratio,
                        std::span<const std::uint64_t> sample_seeds) {
  GEOMAE_CHECK(ratio >= 0.0 && ratio < 1.0, "mask ratio must be in [0,1)");
  GEOMAE_CHECK(static_cast<Index>(sample_seeds.size()) == batch,
               "make_mask_plan: one seed per sample required");
  MaskPlan plan;
  plan.keep = static_cast<Index>(std::llround(static_cast<double>(tokens) * (1.0 - ratio)));
  plan.shuffle.resize(static_cast<std::size_t>(batch));
  plan.restore.resize(static_cast<std::size_t>(batch));
  plan.mask.resize(static_cast<std::size_t>(batch));
  for (Index bi = 0; bi < batch; ++bi) {
    Rng rng(sample_seeds[static_cast<std::size_t>(bi)]);
    auto& shuffle = plan.shuffle[static_cast<std::size_t>(bi)];
    shuffle = rng.permutation(tokens);
    auto& restore = plan.restore[static_cast<std::size_t>(bi)];
    restore.assign(static_cast<std::size_t>(tokens), 0);
    for (Index k = 0; k < tokens; ++k) restore[static_cast<std::size_t>(shuffle[static_cast<std::size_t>(k)])] = k;
    auto& mask = plan.mask[static_cast<std::size_t>(bi)];
    mask.assign(static_cast<std::size_t>(tokens), 1);
    for (Index k = 0; k < plan.keep; ++k) mask[static_cast<std::size_t>(shuffle[static_cast<std::size_t>(k)])] = 0;
  }
  return plan;
}

MaskPlan make_mask_plan(Index batch, Index tokens, double ratio, std::uint64_t seed) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(batch));
  for (Index bi = 0; bi < batch; ++bi)
    seeds[static_cast<std::size_t>(bi)] = derive_seed(seed, static_cast<std::uint64_t>(bi));
  return make_mask_plan(batch, tokens, ratio, seeds);
}

Tensor apply_mask_plan(const Tensor& tokens, const MaskPlan& plan) {
  GEOMAE_CHECK(tokens.rank() == 3, "apply_mask_plan: expected [B,L,D]");
  const Index b = tokens.shape[0], l = tokens.shape[1], d = tokens.shape[2];
  GEOMAE_CHECK(static_cast<Index>(plan.shuffle.size()) == b, "apply_mask_plan: batch mismatch");
  Tensor out({b, plan.keep, d});
  for (Index bi = 0; bi < b; ++bi) {
    GEOMAE_CHECK(static_cast<Index>(plan.shuffle[static_cast<std::size_t>(bi)].size()) == l,
                 "apply_mask_plan: token count mismatch");
    for (Index k = 0; k < plan.keep; ++k) {
      const Index src = plan.shuffle[static_cast<std::size_t>(bi)][static_cast<std::size_t>(k)];
      for (Index di = 0; di < d; ++di) out.at(bi, k, di) = tokens.at(bi, src, di);
    }
  }
  return out;
}

std::pair<Tensor, MaskPlan> random_masking(const Tensor& tokens, double ratio, std::uint64_t seed) {
  GEOMAE_CHECK(tokens.rank() == 3, "random_masking: expected [B,L,D]");
  MaskPlan plan = make_mask_plan(tokens.shape[0], tokens.shape[1], ratio, seed);
  return {apply_mask_plan(tokens, plan), plan};
}

}  // namespace geomae

#include <doctest.h>

#include "geomae/patchify.hpp"
#include "test_util.hpp"

using namespace geomae;

TEST_CASE("patchify single block") {
  Tensor x({1, 1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor tok = patchify_pixels(x, {1, 2, 2});
  CHECK(tok.shape == Shape{1, 1, 4});
  CHECK(tok[0] == 1);
  CHECK(tok[1] == 2);
  CHECK(tok[2] == 3);
  CHECK(tok[3] == 4);
}

TEST_CASE("token counts for the reference geometries") {
  Tensor a({1, 4, 6, 224, 224});
  CHECK(grid_dims_of(a, {1, 16, 16}).tokens() == 784);
  Tensor b({1, 1, 6, 224, 224});
  CHECK(grid_dims_of(b, {1, 14, 14}).tokens() == 256);
}

TEST_CASE("patchify rejects bad shapes") {
  Tensor odd({1, 1, 1, 5, 4});
  CHECK_THROWS_AS(patchify_pixels(odd, {1, 2, 2}), std::invalid_argument);
  Tensor ok({1, 1, 1, 4, 4});
  CHECK_THROWS_AS(patchify_pixels(ok, {2, 2, 2}), std::invalid_argument);  // pt != 1
}

TEST_CASE("unpatchify is the exact inverse") {
  Rng rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const Index t = 1 + static_cast<Index>(rng.uniform_int(4));
    const Index c = 1 + static_cast<Index>(rng.uniform_int(6));
    const Index ph = 1 + static_cast<Index>(rng.uniform_int(4));
    const Index pw = 1 + static_cast<Index>(rng.uniform_int(4));
    const Index gh = 1 + static_cast<Index>(rng.uniform_int(5));
    const Index gw = 1 + static_cast<Index>(rng.uniform_int(5));
    Tensor x = test::random_tensor({2, t, c, gh * ph, gw * pw}, 100 + trial);
    PatchSize patch{1, ph, pw};
    Tensor tok = patchify_pixels(x, patch);
    Tensor back = unpatchify(tok, grid_dims_of(x, patch), patch, c);
    CHECK(test::tensors_equal(back, x));
  }

  // the documented [1,4,6,32,32] round trip with patch 16
  Tensor chip = test::random_tensor({1, 4, 6, 32, 32}, 42);
  PatchSize p16{1, 16, 16};
  CHECK(test::tensors_equal(unpatchify(patchify_pixels(chip, p16), grid_dims_of(chip, p16), p16, 6), chip));

  Tensor zeros({1, 2, 3, 4, 4});
  Tensor ztok = patchify_pixels(zeros, {1, 2, 2});
  for (double v : ztok.v) CHECK(v == 0.0);

  CHECK_THROWS_AS(unpatchify(ztok, GridDims{3, 2, 2}, PatchSize{1, 2, 2}, 3),
                  std::invalid_argument);
}

TEST_CASE("mask plan: keep counts, permutation round trip, determinism") {
  CHECK(make_mask_plan(1, 784, 0.75, std::uint64_t{1}).keep == 196);

  MaskPlan zero = make_mask_plan(2, 6, 0.0, std::uint64_t{5});
  CHECK(zero.keep == 6);
  for (const auto& row : zero.mask)
    for (auto m : row) CHECK(m == 0);

  // restore o shuffle = identity
  MaskPlan plan = make_mask_plan(3, 8, 0.5, std::uint64_t{7});
  CHECK(plan.keep == 4);
  for (Index b = 0; b < 3; ++b)
    for (Index k = 0; k < 8; ++k)
      CHECK(plan.restore[b][plan.shuffle[b][k]] == k);

  // ratio=0 visible equals input in original order only after restore;
  // in shuffled order the set matches
  Tensor tokens = test::random_tensor({2, 8, 3}, 11);
  auto [visible, p2] = random_masking(tokens, 0.5, 21);
  CHECK(visible.shape == Shape{2, 4, 3});
  // applying restore to (visible || placeholder) reproduces original order
  for (Index b = 0; b < 2; ++b)
    for (Index l = 0; l < 8; ++l) {
      const Index r = p2.restore[b][l];
      if (r < p2.keep)
        for (Index d = 0; d < 3; ++d) CHECK(visible.at(b, r, d) == tokens.at(b, l, d));
      else
        CHECK(p2.mask[b][l] == 1);
    }

  MaskPlan again = make_mask_plan(3, 8, 0.5, std::uint64_t{7});
  for (Index b = 0; b < 3; ++b) CHECK(again.shuffle[b] == plan.shuffle[b]);

  CHECK_THROWS_AS(make_mask_plan(1, 8, 1.0, std::uint64_t{1}), std::invalid_argument);
  CHECK_THROWS_AS(make_mask_plan(1, 8, -0.1, std::uint64_t{1}), std::invalid_argument);
}

TEST_CASE("masking rate is uniform over tokens") {
  // L=16, ratio 0.5: every token masked with empirical probability 0.5 +- 0.02
  const Index L = 16;
  const int trials = 10000;
  std::vector<int> masked_count(L, 0);
  for (int s = 0; s < trials; ++s) {
    MaskPlan plan = make_mask_plan(1, L, 0.5, derive_seed(777, static_cast<std::uint64_t>(s)));
    for (Index l = 0; l < L; ++l) masked_count[l] += plan.mask[0][l];
  }
  for (Index l = 0; l < L; ++l) {
    const double rate = static_cast<double>(masked_count[l]) / trials;
    CHECK(std::abs(rate - 0.5) < 0.02);
  }
}

TEST_CASE("per-sample seeds make shards reproduce batch masking") {
  std::vector<std::uint64_t> seeds = {101, 202, 303};
  MaskPlan whole = make_mask_plan(3, 12, 0.75, seeds);
  MaskPlan shard = make_mask_plan(1, 12, 0.75, std::span<const std::uint64_t>(&seeds[1], 1));
  CHECK(whole.shuffle[1] == shard.shuffle[0]);
}

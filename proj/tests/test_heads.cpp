#include <doctest.h>

#include <cmath>

#include "geomae/heads.hpp"
#include "test_util.hpp"

using namespace geomae;

namespace {

LatentGrid random_latent(Index b, GridDims dims, Index dim, std::uint64_t seed,
                         bool requires_grad = false) {
  LatentGrid g;
  g.data = make_var(test::random_tensor({b, dims.tokens(), dim}, seed), requires_grad);
  g.dims = dims;
  return g;
}

}  // namespace

TEST_CASE("classify: zero weights give the bias, pooling is exact") {
  ClassifyHead head(6, 3, 1, 5);
  for (double& w : head.params().get("head.out.weight")->val.v) w = 0.0;
  Tensor& bias = head.params().get("head.out.bias")->val;
  bias.v = {0.3, -0.2, 1.1};

  LatentGrid latent = random_latent(2, {1, 2, 2}, 6, 7);
  Var logits = head.forward(latent);
  CHECK(logits->val.shape == Shape{2, 3});
  for (Index b = 0; b < 2; ++b)
    for (Index k = 0; k < 3; ++k) CHECK(logits->val.at(b, k) == bias[k]);

  // single token: pooling is the identity
  LatentGrid one = random_latent(1, {1, 1, 1}, 6, 9);
  ClassifyHead h2(6, 2, 1, 6);
  Var l2 = h2.forward(one);
  const Tensor& w = h2.params().get("head.out.weight")->val;
  const Tensor& b2 = h2.params().get("head.out.bias")->val;
  for (Index k = 0; k < 2; ++k) {
    double acc = b2[k];
    for (Index d = 0; d < 6; ++d) acc += w.at(k, d) * one.data->val.at(0, 0, d);
    CHECK(l2->val.at(0, k) == doctest::Approx(acc).epsilon(1e-12));
  }

  // random two-token case equals mean-then-matmul by hand
  LatentGrid two = random_latent(1, {1, 1, 2}, 6, 11);
  Var l3 = h2.forward(two);
  for (Index k = 0; k < 2; ++k) {
    double acc = b2[k];
    for (Index d = 0; d < 6; ++d)
      acc += w.at(k, d) * 0.5 * (two.data->val.at(0, 0, d) + two.data->val.at(0, 1, d));
    CHECK(l3->val.at(0, k) == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("latent feature maps: last frame and temporal concatenation") {
  const GridDims dims{3, 2, 2};
  LatentGrid latent = random_latent(2, dims, 4, 13);

  Var last = latent_to_feature_map(latent, TemporalMode::kLastFrame);
  CHECK(last->val.shape == Shape{2, 4, 2, 2});
  // token (t=2, i=1, j=0) is row 2*4 + 1*2 + 0 = 10
  for (Index d = 0; d < 4; ++d) CHECK(last->val.at(0, d, 1, 0) == latent.data->val.at(0, 10, d));

  Var cat = latent_to_feature_map(latent, TemporalMode::kConcatTime);
  CHECK(cat->val.shape == Shape{2, 12, 2, 2});
  // frame t occupies channels [t*4, (t+1)*4)
  for (Index d = 0; d < 4; ++d) CHECK(cat->val.at(0, 8 + d, 1, 0) == latent.data->val.at(0, 10, d));
}

TEST_CASE("deconv head geometry: grid 14 restores 224 exactly, grid 16 resizes") {
  // miniature stand-in with the same arithmetic: 4 doublings then optional resize
  SegmentDeconvHead head(8, 3, 21);
  LatentGrid g14 = random_latent(1, {1, 2, 2}, 8, 23);

  Var out = head.forward(g14, 32, 32, TemporalMode::kLastFrame);
  CHECK(out->val.shape == Shape{1, 3, 32, 32});  // 2 * 2^4 = 32, no resize

  Var resized = head.forward(g14, 28, 28, TemporalMode::kLastFrame);
  CHECK(resized->val.shape == Shape{1, 3, 28, 28});  // 32 -> 28 bilinear

  CHECK_THROWS_AS(head.forward(g14, 1, 1, TemporalMode::kLastFrame), std::invalid_argument);
}

TEST_CASE("deconv head at the published grid sizes") {
  // patch 16 on 224 inputs: grid 14 -> exactly 224. patch 14: grid 16 -> 256 -> 224.
  SegmentDeconvHead head(4, 2, 29);
  LatentGrid g14 = random_latent(1, {1, 14, 14}, 4, 31);
  Var a = head.forward(g14, 224, 224, TemporalMode::kLastFrame);
  CHECK(a->val.shape == Shape{1, 2, 224, 224});

  LatentGrid g16 = random_latent(1, {1, 16, 16}, 4, 37);
  Var b = head.forward(g16, 224, 224, TemporalMode::kLastFrame);
  CHECK(b->val.shape == Shape{1, 2, 224, 224});
}

TEST_CASE("constant latent with zero classifier gives uniform logits") {
  SegmentDeconvHead head(8, 4, 41);
  for (double& w : head.params().get("head.classifier.weight")->val.v) w = 0.0;
  Tensor& bias = head.params().get("head.classifier.bias")->val;
  bias.v = {0.1, 0.2, 0.3, 0.4};
  LatentGrid latent;
  latent.data = make_var(Tensor({1, 4, 8}, 0.77), false);
  latent.dims = {1, 2, 2};
  Var out = head.forward(latent, 32, 32, TemporalMode::kLastFrame);
  for (Index k = 0; k < 4; ++k)
    for (Index y = 0; y < 32; ++y)
      for (Index x = 0; x < 32; ++x) CHECK(out->val.at(0, k, y, x) == doctest::Approx(bias[k]));
}

TEST_CASE("conv-upsample head: block count and shape contract") {
  CHECK(SegmentConvUpHead::blocks_needed(2, 32) == 4);
  CHECK(SegmentConvUpHead::blocks_needed(14, 224) == 4);
  CHECK(SegmentConvUpHead::blocks_needed(16, 224) == 4);  // 256 then resize
  CHECK(SegmentConvUpHead::blocks_needed(4, 4) == 0);
  CHECK_THROWS_AS(SegmentConvUpHead::blocks_needed(8, 4), std::invalid_argument);

  SegmentConvUpHead head(8, 5, 32, 2, 1, 43);
  LatentGrid latent = random_latent(2, {2, 2, 2}, 4, 47);  // concat-time: 2*4=8 channels
  Var out = head.forward(latent, 32, 32, TemporalMode::kConcatTime);
  CHECK(out->val.shape == Shape{2, 5, 32, 32});

  SegmentConvUpHead head16(4, 2, 28, 2, 0, 49);  // 2 -> 32 overshoot, resize to 28
  LatentGrid single = random_latent(1, {1, 2, 2}, 4, 53);
  Var out2 = head16.forward(single, 28, 28, TemporalMode::kLastFrame);
  CHECK(out2->val.shape == Shape{1, 2, 28, 28});
}

TEST_CASE("weighted cross-entropy: uniform logits, weight scaling, brute force") {
  // uniform logits over 2 classes, equal weights: loss = ln 2
  Var logits = make_var(Tensor({1, 2, 2, 2}), false);
  std::vector<Index> labels = {0, 1, 0, 1};
  Var loss = segmentation_loss(logits, labels, {1.0, 1.0});
  CHECK(loss->val[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // doubling all weights leaves the normalized loss unchanged
  Var random_logits = make_var(test::random_tensor({1, 3, 2, 2}, 59), false);
  std::vector<Index> labels3 = {0, 2, 1, 1};
  Var l1 = segmentation_loss(random_logits, labels3, {2.0, 8.0, 1.0});
  Var l2 = segmentation_loss(random_logits, labels3, {4.0, 16.0, 2.0});
  CHECK(l1->val[0] == doctest::Approx(l2->val[0]).epsilon(1e-12));

  // reduces to plain cross-entropy under equal weights
  double plain = 0.0;
  for (Index p = 0; p < 4; ++p) {
    double mx = -1e300, se = 0.0;
    for (Index k = 0; k < 3; ++k) mx = std::max(mx, random_logits->val.v[k * 4 + p]);
    for (Index k = 0; k < 3; ++k) se += std::exp(random_logits->val.v[k * 4 + p] - mx);
    plain += mx + std::log(se) - random_logits->val.v[labels3[static_cast<std::size_t>(p)] * 4 + p];
  }
  plain /= 4.0;
  Var leq = segmentation_loss(random_logits, labels3, {1.0, 1.0, 1.0});
  CHECK(leq->val[0] == doctest::Approx(plain).epsilon(1e-12));

  // three-pixel hand case with the 2:8 weighting
  Tensor t({1, 2, 1, 3}, {0.2, -0.1, 0.4, 0.9, 0.3, -0.5});
  std::vector<Index> y = {0, 1, 1};
  double expect = 0.0, wsum = 0.0;
  const double w[2] = {2.0, 8.0};
  for (Index p = 0; p < 3; ++p) {
    const double a = t.v[static_cast<std::size_t>(p)], b = t.v[static_cast<std::size_t>(3 + p)];
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    const double chosen = y[static_cast<std::size_t>(p)] == 0 ? a : b;
    expect += w[y[static_cast<std::size_t>(p)]] * (lse - chosen);
    wsum += w[y[static_cast<std::size_t>(p)]];
  }
  expect /= wsum;
  Var l3 = segmentation_loss(make_var(t, false), y, {2.0, 8.0});
  CHECK(l3->val[0] == doctest::Approx(expect).epsilon(1e-12));

  std::vector<Index> bad = {0, 3, 1};
  CHECK_THROWS_AS(segmentation_loss(make_var(t, false), bad, {2.0, 8.0}), std::invalid_argument);
}

TEST_CASE("segment head parameters receive finite-difference-correct gradients") {
  SegmentDeconvHead head(4, 2, 61);
  LatentGrid latent = random_latent(1, {1, 2, 2}, 4, 67);
  std::vector<Index> labels(32 * 32, 1);
  labels[5] = 0;
  auto loss_fn = [&]() {
    Var logits = head.forward(latent, 32, 32, TemporalMode::kLastFrame);
    return segmentation_loss(logits, labels, {2.0, 8.0});
  };
  Var loss = loss_fn();
  head.params().zero_grads();
  backward(loss);

  // spot check one weight element per parameter against central differences
  const double h = 1e-6;
  for (const auto& name : head.params().names()) {
    Var p = head.params().get(name);
    const Index i = p->val.numel() / 2;
    const double keep = p->val[i];
    p->val[i] = keep + h;
    const double lp = loss_fn()->val[0];
    p->val[i] = keep - h;
    const double lm = loss_fn()->val[0];
    p->val[i] = keep;
    const double numeric = (lp - lm) / (2.0 * h);
    CHECK(p->grad[i] == doctest::Approx(numeric).epsilon(1e-4));
  }
}

TEST_CASE("gpp regressor: bias-only output, brute-force forward, gradients") {
  GppRegressor::Config cfg;
  cfg.latent_dim = 4;
  cfg.tokens = 2;
  cfg.hidden1 = 3;
  cfg.hidden2 = 2;
  cfg.aux_channels = 2;
  cfg.aux_h = cfg.aux_w = 2;
  cfg.conv_channels1 = 2;
  cfg.conv_channels2 = 3;
  cfg.conv_channels3 = 2;
  cfg.aux_out = 2;
  GppRegressor reg(cfg, 71);

  LatentGrid latent = random_latent(2, {1, 1, 2}, 4, 73);
  Var aux = make_var(test::random_tensor({2, 2, 2, 2}, 79), false);

  // zero final weights: prediction equals the output bias
  {
    GppRegressor zero(cfg, 83);
    for (double& w : zero.params().get("head.out.weight")->val.v) w = 0.0;
    zero.params().get("head.out.bias")->val[0] = 2.5;
    Var out = zero.forward(latent, aux);
    CHECK(out->val.shape == Shape{2});
    CHECK(out->val[0] == 2.5);
    CHECK(out->val[1] == 2.5);
  }

  // brute-force forward with plain loops
  {
    auto& P = reg.params();
    auto lin = [&](const std::vector<double>& x, const std::string& w, const std::string& b) {
      const Tensor& wt = P.get(w)->val;
      const Tensor& bt = P.get(b)->val;
      std::vector<double> out(static_cast<std::size_t>(wt.shape[0]));
      for (Index o = 0; o < wt.shape[0]; ++o) {
        double acc = bt[o];
        for (Index i = 0; i < wt.shape[1]; ++i) acc += wt.at(o, i) * x[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(o)] = std::max(0.0, acc);
      }
      return out;
    };
    // conv 3x3 pad 1 with relu, on a [C,2,2] grid
    auto conv = [&](const std::vector<double>& x, Index cin, const std::string& w,
                    const std::string& b) {
      const Tensor& wt = P.get(w)->val;
      const Tensor& bt = P.get(b)->val;
      const Index cout = wt.shape[0];
      std::vector<double> out(static_cast<std::size_t>(cout * 4));
      for (Index oc = 0; oc < cout; ++oc)
        for (Index y = 0; y < 2; ++y)
          for (Index x2 = 0; x2 < 2; ++x2) {
            double acc = bt[oc];
            for (Index ic = 0; ic < cin; ++ic)
              for (Index ky = 0; ky < 3; ++ky)
                for (Index kx = 0; kx < 3; ++kx) {
                  const Index sy = y - 1 + ky, sx = x2 - 1 + kx;
                  if (sy < 0 || sy >= 2 || sx < 0 || sx >= 2) continue;
                  acc += wt.at(oc, ic, ky, kx) * x[static_cast<std::size_t>(ic * 4 + sy * 2 + sx)];
                }
            out[static_cast<std::size_t>(oc * 4 + y * 2 + x2)] = std::max(0.0, acc);
          }
      return out;
    };

    Var got = reg.forward(latent, aux);
    for (Index b = 0; b < 2; ++b) {
      std::vector<double> flat_h;
      for (Index t = 0; t < 2; ++t) {
        std::vector<double> tok(4);
        for (Index d = 0; d < 4; ++d) tok[static_cast<std::size_t>(d)] = latent.data->val.at(b, t, d);
        auto h1 = lin(tok, "head.hls.fc0.weight", "head.hls.fc0.bias");
        auto h2 = lin(h1, "head.hls.fc1.weight", "head.hls.fc1.bias");
        flat_h.insert(flat_h.end(), h2.begin(), h2.end());
      }
      std::vector<double> a(8);
      for (Index i = 0; i < 8; ++i) a[static_cast<std::size_t>(i)] = aux->val[b * 8 + i];
      auto c1 = conv(a, 2, "head.aux.conv0.weight", "head.aux.conv0.bias");
      auto c2 = conv(c1, 2, "head.aux.conv1.weight", "head.aux.conv1.bias");
      auto c3 = conv(c2, 3, "head.aux.conv2.weight", "head.aux.conv2.bias");
      auto af = lin(c3, "head.aux.fc.weight", "head.aux.fc.bias");
      std::vector<double> joint = flat_h;
      joint.insert(joint.end(), af.begin(), af.end());
      const Tensor& ow = P.get("head.out.weight")->val;
      double acc = P.get("head.out.bias")->val[0];
      for (Index i = 0; i < ow.shape[1]; ++i) acc += ow.at(0, i) * joint[static_cast<std::size_t>(i)];
      CHECK(got->val[b] == doctest::Approx(acc).epsilon(1e-10));
    }
  }

  // head gradient vs finite differences through the MSE objective; biases
  // are pushed to 0.3 so no ReLU pre-activation sits at the kink
  {
    for (const auto& name : reg.params().names()) {
      Var p = reg.params().get(name);
      if (name.find(".bias") != std::string::npos)
        for (double& x : p->val.v) x = 0.3;
      else
        for (double& x : p->val.v) x *= 0.5;
    }
    Tensor target({2}, {1.0, -0.5});
    auto loss_fn = [&]() { return mse_to_const(reg.forward(latent, aux), target); };
    Var loss = loss_fn();
    reg.params().zero_grads();
    backward(loss);
    const double h = 1e-6;
    for (const auto& name : reg.params().names()) {
      Var p = reg.params().get(name);
      const Index i = 0;
      const double keep = p->val[i];
      p->val[i] = keep + h;
      const double lp = loss_fn()->val[0];
      p->val[i] = keep - h;
      const double lm = loss_fn()->val[0];
      p->val[i] = keep;
      const double numeric = (lp - lm) / (2.0 * h);
      CHECK(p->grad[i] == doctest::Approx(numeric).epsilon(1e-4));
    }
  }

  // a latent that still carries gradients is rejected (freeze contract)
  LatentGrid live = random_latent(2, {1, 1, 2}, 4, 89, true);
  CHECK_THROWS_AS(reg.forward(live, aux), std::invalid_argument);
}

TEST_CASE("frozen backbone receives exactly zero gradient under gpp training") {
  EncoderConfig enc{16, 1, 2, 2.0, {1, 2, 2}, 2};
  MaeModel model = MaeModel::init(enc, DecoderConfig{8, 1, 2, 2.0}, 91);
  ReflectanceBatch batch;
  batch.values = test::random_tensor({2, 1, 2, 4, 4}, 93, 0.0, 1.0);

  Var latent = encode_unmasked(model, batch, false);
  LatentGrid detached{constant(latent->val), grid_dims_of(batch.values, enc.patch)};

  GppRegressor::Config cfg;
  cfg.latent_dim = 16;
  cfg.tokens = 4;
  cfg.aux_channels = 2;
  cfg.aux_h = cfg.aux_w = 2;
  GppRegressor reg(cfg, 97);
  Var aux = make_var(test::random_tensor({2, 2, 2, 2}, 101), false);
  Var loss = mse_to_const(reg.forward(detached, aux), Tensor({2}, {3.0, 4.0}));

  model.params.zero_grads();
  reg.params().zero_grads();
  backward(loss);

  double backbone_norm = 0.0;
  for (const auto& name : model.params.names())
    for (double g : model.params.get(name)->grad.v) backbone_norm += g * g;
  CHECK(backbone_norm == 0.0);

  double head_norm = 0.0;
  for (const auto& name : reg.params().names())
    for (double g : reg.params().get(name)->grad.v) head_norm += g * g;
  CHECK(head_norm > 0.0);
}

TEST_CASE("prepare_chip modes") {
  Tensor chip = test::random_tensor({2, 3, 6, 6}, 103);

  // same-size resize is the identity
  Tensor same = prepare_chip(chip, 6, 6, ResampleMode::kResizeBilinear);
  CHECK(test::tensors_equal(same, chip));

  // constant chip stays constant at any size
  Tensor flat = prepare_chip(Tensor({1, 1, 2, 2}, 0.6), 9, 5, ResampleMode::kResizeBilinear);
  for (double v : flat.v) CHECK(v == doctest::Approx(0.6));

  Tensor cropped = prepare_chip(chip, 4, 4, ResampleMode::kCenterCrop);
  CHECK(cropped.shape == Shape{2, 3, 4, 4});
  CHECK(cropped.at(0, 0, 0, 0) == chip.at(0, 0, 1, 1));
  CHECK_THROWS_AS(prepare_chip(chip, 8, 8, ResampleMode::kCenterCrop), std::invalid_argument);

  Tensor up = prepare_chip(chip, 12, 12, ResampleMode::kUpscaleNearest);
  CHECK(up.shape == Shape{2, 3, 12, 12});
  CHECK(up.at(0, 0, 0, 0) == chip.at(0, 0, 0, 0));
  CHECK(up.at(0, 0, 11, 11) == chip.at(0, 0, 5, 5));

  // 512 -> 448 gives a 32x32 grid under patch 14 (448 / 14)
  CHECK(448 % 14 == 0);
  CHECK(448 / 14 == 32);
}

#include <benchmark/benchmark.h>

#include "geomae/heads.hpp"
#include "geomae/mae.hpp"
#include "geomae/trainer.hpp"

using namespace geomae;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(s));
  for (double& x : t.v) x = rng.uniform(0.0, 1.0);
  return t;
}

void BM_Sincos3D(benchmark::State& state) {
  const GridDims dims{4, 14, 14};
  for (auto _ : state) {
    PosTable3D table = sincos_3d(dims, state.range(0));
    benchmark::DoNotOptimize(table.values.v.data());
  }
}
BENCHMARK(BM_Sincos3D)->Arg(64)->Arg(512)->Arg(1024);

void BM_PatchifyRoundTrip(benchmark::State& state) {
  const Index hw = state.range(0);
  const Tensor chip = random_tensor({1, 4, 6, hw, hw}, 7);
  const PatchSize patch{1, 16, 16};
  const GridDims dims = grid_dims_of(chip, patch);
  for (auto _ : state) {
    Tensor tok = patchify_pixels(chip, patch);
    Tensor back = unpatchify(tok, dims, patch, 6);
    benchmark::DoNotOptimize(back.v.data());
  }
}
BENCHMARK(BM_PatchifyRoundTrip)->Arg(64)->Arg(224);

void BM_MaskPlan(benchmark::State& state) {
  std::uint64_t seed = 1;
  for (auto _ : state) {
    MaskPlan plan = make_mask_plan(8, state.range(0), 0.75, seed++);
    benchmark::DoNotOptimize(plan.shuffle.data());
  }
}
BENCHMARK(BM_MaskPlan)->Arg(196)->Arg(784);

void BM_EncoderForward(benchmark::State& state) {
  EncoderConfig cfg = EncoderConfig::preset("tiny");
  cfg.depth = state.range(0);
  MaeModel model = MaeModel::init(cfg, DecoderConfig::preset("tiny"), 3);
  const Tensor tokens = random_tensor({4, 196, cfg.dim}, 11);
  for (auto _ : state) {
    Var out = encoder_forward(model, make_var(tokens, false));
    benchmark::DoNotOptimize(out->val.v.data());
  }
}
BENCHMARK(BM_EncoderForward)->Arg(2)->Arg(4);

void BM_PretrainStep(benchmark::State& state) {
  MaeModel model = MaeModel::init(EncoderConfig::preset("tiny"), DecoderConfig::preset("tiny"), 5);
  ReflectanceBatch batch;
  batch.values = random_tensor({4, 4, 6, 32, 32}, 13);
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  PretrainOptions opts;
  for (auto _ : state) {
    PretrainGrad g = pretrain_grad(model, batch, opts, seeds);
    benchmark::DoNotOptimize(g.loss);
  }
}
BENCHMARK(BM_PretrainStep);

void BM_SegmentDeconvForward(benchmark::State& state) {
  SegmentDeconvHead head(64, 2, 17);
  LatentGrid latent{make_var(random_tensor({1, 196, 64}, 19), false), {1, 14, 14}};
  for (auto _ : state) {
    Var out = head.forward(latent, 224, 224, TemporalMode::kLastFrame);
    benchmark::DoNotOptimize(out->val.v.data());
  }
}
BENCHMARK(BM_SegmentDeconvForward);

}  // namespace

BENCHMARK_MAIN();

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "geomae/checkpoint.hpp"
#include "geomae/trainer.hpp"
#include "test_util.hpp"

using namespace geomae;

TEST_CASE("learning-rate schedule anchors") {
  ScheduleConfig cfg;  // stock schedule
  CHECK(lr_at(0.0, cfg) == 1e-6);
  CHECK(lr_at(40.0, cfg) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_at(400.0, cfg) == doctest::Approx(cfg.min_lr).epsilon(1e-15));
  CHECK(lr_at(1000.0, cfg) == doctest::Approx(cfg.min_lr).epsilon(1e-15));

  // continuity at the warmup/cosine junction
  const double below = lr_at(40.0 - 1e-9, cfg);
  const double above = lr_at(40.0 + 1e-9, cfg);
  CHECK(std::abs(below - above) < 1e-9);

  // halfway through the cosine: midpoint of max and min
  cfg.min_lr = 1e-5;
  CHECK(lr_at(220.0, cfg) == doctest::Approx(0.5 * (5e-4 + 1e-5)).epsilon(1e-12));

  ScheduleConfig bad;
  bad.warmup_epochs = 500.0;
  CHECK_THROWS_AS(lr_at(1.0, bad), std::invalid_argument);
}

TEST_CASE("augment: shared transform, reproducibility, window oracle") {
  Tensor chip = test::random_tensor({4, 3, 12, 12}, 5);

  Rng r1(99), r2(99);
  Tensor a = augment(chip, 8, r1);
  Tensor b = augment(chip, 8, r2);
  CHECK(test::tensors_equal(a, b));
  CHECK(a.shape == Shape{4, 3, 8, 8});

  // crop contents equal the source window for every frame
  Rng r3(123);
  AugmentPlan plan = sample_augment_plan(12, 12, 8, r3);
  Tensor c = apply_augment(chip, plan, 8);
  for (Index t = 0; t < 4; ++t)
    for (Index ch = 0; ch < 3; ++ch)
      for (Index y = 0; y < 8; ++y)
        for (Index x = 0; x < 8; ++x) {
          const Index sx = plan.flip ? plan.col + 7 - x : plan.col + x;
          CHECK(c.at(t, ch, y, x) == chip.at(t, ch, plan.row + y, sx));
        }

  // flipping twice with the same decision is the identity
  AugmentPlan flip{0, 0, true};
  Tensor once = apply_augment(chip, flip, 12);
  Tensor twice = apply_augment(once, flip, 12);
  CHECK(test::tensors_equal(twice, chip));

  Tensor small({1, 1, 4, 4});
  Rng r4(7);
  CHECK_THROWS_AS(augment(small, 8, r4), std::invalid_argument);
}

TEST_CASE("AdamW: weight-decay exclusions and convergence") {
  CHECK(AdamW::decays("enc.block0.attn.qkv.weight"));
  CHECK_FALSE(AdamW::decays("enc.block0.ln1.gamma"));
  CHECK_FALSE(AdamW::decays("enc.block0.ln1.beta"));
  CHECK_FALSE(AdamW::decays("enc.patch_embed.bias"));
  CHECK_FALSE(AdamW::decays("dec.mask_token"));
  CHECK_FALSE(AdamW::decays("meta.w_time"));

  // minimize (x - 3)^2
  ParamStore store;
  Var x = store.add("head.out.weight", Tensor::scalar(0.0));
  AdamW opt({0.9, 0.95, 1e-8, 0.0}, store.names());
  for (int i = 0; i < 400; ++i) {
    std::map<std::string, Tensor> g;
    g["head.out.weight"] = Tensor::scalar(2.0 * (x->val[0] - 3.0));
    opt.step(store, g, 0.05);
  }
  CHECK(x->val[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  MaeModel m = MaeModel::init(EncoderConfig{16, 1, 2, 2.0, {1, 2, 2}, 2},
                              DecoderConfig{8, 1, 2, 2.0}, 3);
  auto before = m.params.values();
  AdamW opt({}, m.params.names());
  std::map<std::string, Tensor> g;
  for (const auto& name : m.params.names())
    g[name] = test::random_tensor(m.params.get(name)->val.shape, 17);
  opt.step(m.params, g, 0.0);
  for (const auto& [name, t] : before) CHECK(test::tensors_equal(m.params.get(name)->val, t));
}

TEST_CASE("channel normalization") {
  Tensor chip({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  ChannelStats stats{{2.5, 25.0}, {1.0, 10.0}};
  stats.apply(chip);
  CHECK(chip.at(0, 0, 0, 0) == doctest::Approx(-1.5));
  CHECK(chip.at(0, 1, 1, 1) == doctest::Approx(1.5));
}

namespace {

ChipSource synthetic_source(Index t, Index c, Index hw) {
  return [=](Index idx) {
    ChipSample s;
    s.chip = test::random_tensor({t, c, hw, hw}, 9000 + static_cast<std::uint64_t>(idx), 0.0, 1.0);
    GeoTemporalMetadata meta;
    meta.lat = -60.0 + static_cast<double>(idx % 120);
    meta.lon = -170.0 + static_cast<double>((idx * 7) % 340);
    for (Index f = 0; f < t; ++f)
      meta.dates.push_back({2018 + static_cast<int>(idx % 4), 1 + static_cast<int>((idx * 31 + f * 45) % 365)});
    s.meta = meta;
    return s;
  };
}

PretrainLoopConfig tiny_loop_config(Index steps) {
  PretrainLoopConfig cfg;
  cfg.batch_size = 2;
  cfg.total_steps = steps;
  cfg.crop = 4;
  cfg.mask_ratio = 0.5;
  cfg.drop_prob = 0.1;
  cfg.schedule = {1e-3, 1e-6, 1.0, 10.0, 0.0};
  cfg.adamw.weight_decay = 0.05;
  return cfg;
}

MaeModel tiny_model(std::uint64_t seed) {
  return MaeModel::init(EncoderConfig{16, 1, 2, 2.0, {1, 2, 2}, 2}, DecoderConfig{8, 1, 2, 2.0},
                        seed);
}

}  // namespace

TEST_CASE("training is reproducible and resumable bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "geomae_train_test";
  fs::remove_all(base);

  ChipSource source = synthetic_source(2, 2, 6);
  const Index n = 7;

  MaeModel m1 = tiny_model(42);
  TrainResult r1 = train_pretrain(m1, source, n, tiny_loop_config(10), 2024, base / "a");

  MaeModel m2 = tiny_model(42);
  TrainResult r2 = train_pretrain(m2, source, n, tiny_loop_config(10), 2024, base / "b");

  REQUIRE(r1.trace.size() == r2.trace.size());
  for (std::size_t i = 0; i < r1.trace.size(); ++i) CHECK(r1.trace[i].loss == r2.trace[i].loss);
  for (const auto& name : m1.params.names())
    CHECK(test::tensors_equal(m1.params.get(name)->val, m2.params.get(name)->val));

  // identical trace files byte for byte
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(base / "a/loss_trace.csv") == slurp(base / "b/loss_trace.csv"));

  // run 6 steps, checkpoint, resume to 10: must equal the uninterrupted run
  PretrainLoopConfig first = tiny_loop_config(6);
  MaeModel m3 = tiny_model(42);
  train_pretrain(m3, source, n, first, 2024, base / "c");
  PretrainLoopConfig rest = tiny_loop_config(10);
  MaeModel m4 = tiny_model(42);  // values get replaced by the checkpoint load
  train_pretrain(m4, source, n, rest, 2024, base / "c", nullptr, true);
  for (const auto& name : m1.params.names())
    CHECK(test::tensors_equal(m4.params.get(name)->val, m1.params.get(name)->val));

  // the resumed trace holds the full history and matches the clean run
  CHECK(slurp(base / "c/loss_trace.csv") == slurp(base / "a/loss_trace.csv"));

  fs::remove_all(base);
}

TEST_CASE("training aborts on non-finite loss") {
  ChipSource poisoned = [](Index) {
    ChipSample s;
    s.chip = Tensor({1, 2, 4, 4}, 1e308);  // overflows in the loss
    return s;
  };
  MaeModel m = tiny_model(1);
  PretrainLoopConfig cfg = tiny_loop_config(3);
  cfg.drop_prob = 0.0;
  const auto dir = std::filesystem::temp_directory_path() / "geomae_nan_test";
  CHECK_THROWS_AS(train_pretrain(m, poisoned, 2, cfg, 3, dir), std::runtime_error);
  std::filesystem::remove_all(dir);
}

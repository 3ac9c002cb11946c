#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "geomae/dataset.hpp"
#include "geomae/checkpoint.hpp"
#include "geomae/chipio.hpp"
#include "geomae/csvio.hpp"
#include "geomae/experiment.hpp"
#include "test_util.hpp"

using namespace geomae;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("experiment config: round trip and presets") {
  ExperimentConfig cfg = parse_experiment_json(R"({
    "task": "pretrain",
    "preset": "tiny",
    "seed": 42,
    "out_dir": "somewhere",
    "schedule": {"max_lr": 1e-3},
    "train": {"batch_size": 4, "crop": 32}
  })");
  CHECK(cfg.encoder.dim == 64);
  CHECK(cfg.decoder.dim == 32);
  CHECK(cfg.schedule.max_lr == 1e-3);
  CHECK(cfg.schedule.start_lr == 1e-6);
  CHECK(cfg.train.batch_size == 4);
  CHECK(cfg.seed == 42);

  // parse -> serialize -> parse is exact
  const std::string once = experiment_to_json(cfg);
  ExperimentConfig back = parse_experiment_json(once);
  CHECK(experiment_to_json(back) == once);

  // big presets resolve the default decoder
  ExperimentConfig big = parse_experiment_json(R"({"preset": "300M"})");
  CHECK(big.encoder.dim == 1024);
  CHECK(big.encoder.depth == 24);
  CHECK(big.decoder.dim == 512);
  CHECK(big.decoder.depth == 8);
  ExperimentConfig huge = parse_experiment_json(R"({"preset": "600M"})");
  CHECK(huge.encoder.patch.ph == 14);
}

TEST_CASE("experiment config: unknown keys rejected everywhere") {
  CHECK_THROWS_AS(parse_experiment_json(R"({"tsak": "pretrain"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_json(R"({"train": {"batchsize": 4}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_json(R"({"schedule": {"maxlr": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_json(R"({"finetune": {"heads": "classify"}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_json(R"({"encoder": {"dims": 8}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_json(R"({"benchmark": {"budgets": 10}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_json("not json"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_json(R"({"preset": "900M"})"), ConfigError);
}

TEST_CASE("experiment config: file load with overrides") {
  const fs::path dir = scratch("geomae_cfg_test");
  {
    std::ofstream f(dir / "cfg.json");
    f << R"({"task": "pretrain", "preset": "tiny", "seed": 1, "train": {"batch_size": 8}})";
  }
  ExperimentConfig cfg = load_experiment_config(dir / "cfg.json",
                                                {"train.batch_size=2", "seed=9", "out_dir=xyz"});
  CHECK(cfg.train.batch_size == 2);
  CHECK(cfg.seed == 9);
  CHECK(cfg.out_dir == "xyz");

  CHECK_THROWS_AS(load_experiment_config(dir / "cfg.json", {"no_equals"}), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(dir / "missing.json", {}), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("config validation catches missing references") {
  ExperimentConfig cfg;
  cfg.data_manifest = "/definitely/not/here.csv";
  CHECK_THROWS_AS(cfg.validate_references(), ConfigError);

  ExperimentConfig bad_task;
  bad_task.task = "resolve";
  CHECK_THROWS_AS(bad_task.validate_references(), ConfigError);
}

TEST_CASE("pretrain command: artifacts and seeded idempotence") {
  const fs::path dir = scratch("geomae_cmd_pretrain");

  // small dataset through the sampler
  SampleDatasetOptions s;
  synth_catalog_csvs(dir / "catalog.csv", dir / "scenes.csv", {.tiles = 40, .bands = 6}, 3);
  s.catalog_csv = dir / "catalog.csv";
  s.scenes_csv = dir / "scenes.csv";
  s.out_dir = dir / "data";
  s.seed = 3;
  s.sampler.select.tiles_per_class = 4;
  s.sampler.select.pool_size = 12;
  s.sampler.select.urban_tiles = 6;
  s.sampler.select.entropy_tiles = 6;
  s.sampler.train_sequence_cap = 10;
  s.sampler.val_sequence_cap = 3;
  s.sampler.chip_hw = 32;
  cmd_sample_dataset(s);
  CHECK(fs::exists(dir / "data/manifest.csv"));
  CHECK(fs::exists(dir / "data/tiles.csv"));
  CHECK(fs::exists(dir / "data/class_stats.csv"));
  CHECK(slurp(dir / "data/verify_report.txt").find("FAIL") == std::string::npos);

  ExperimentConfig cfg;
  cfg.task = "pretrain";
  cfg.preset = "tiny";
  cfg.encoder = EncoderConfig::preset("tiny");
  cfg.decoder = DecoderConfig::preset("tiny");
  cfg.data_manifest = (dir / "data/manifest.csv").string();
  cfg.seed = 77;
  cfg.out_dir = (dir / "runA").string();
  cfg.schedule = {1e-3, 1e-6, 0.5, 4.0, 0.0};
  cfg.train.batch_size = 4;
  cfg.train.total_steps = 6;
  cfg.train.crop = 32;
  cmd_pretrain(cfg);
  CHECK(fs::exists(dir / "runA/loss_trace.csv"));
  CHECK(fs::exists(dir / "runA/checkpoint/manifest.tsv"));
  CHECK(fs::exists(dir / "runA/config.json"));

  cfg.out_dir = (dir / "runB").string();
  cmd_pretrain(cfg);
  CHECK(slurp(dir / "runA/loss_trace.csv") == slurp(dir / "runB/loss_trace.csv"));
  CHECK(slurp(dir / "runA/checkpoint/arrays.bin") == slurp(dir / "runB/checkpoint/arrays.bin"));

  fs::remove_all(dir);
}

TEST_CASE("sampler command: empty scene index warns but succeeds") {
  const fs::path dir = scratch("geomae_cmd_empty");
  synth_catalog_csvs(dir / "catalog.csv", dir / "scenes_full.csv", {.tiles = 10, .bands = 6}, 5);
  {
    std::ofstream empty(dir / "scenes.csv");
    empty << "tile_id,year,doy,cloud_frac,water_frac,miss_b0,miss_b1,miss_b2,miss_b3,miss_b4,miss_b5\n";
  }
  SampleDatasetOptions s;
  s.catalog_csv = dir / "catalog.csv";
  s.scenes_csv = dir / "scenes.csv";
  s.out_dir = dir / "data";
  s.sampler.select.tiles_per_class = 2;
  s.sampler.select.pool_size = 5;
  s.sampler.select.urban_tiles = 2;
  s.sampler.select.entropy_tiles = 2;
  cmd_sample_dataset(s);
  const CsvTable manifest = read_csv(dir / "data/manifest.csv");
  CHECK(manifest.size() == 0);
  fs::remove_all(dir);
}

TEST_CASE("eval on a perfect-prediction fixture scores all ones") {
  const fs::path dir = scratch("geomae_cmd_eval");
  LabeledDataset data = synth_classify_dataset(dir / "cls", {.n = 16, .n_classes = 4, .hw = 16}, 7);

  // predictions equal to the labels
  {
    std::ofstream pred(dir / "pred.csv");
    pred << "chip_id,label\n";
    for (std::size_t i = 0; i < data.items.size(); ++i)
      pred << i << ',' << data.items[i].label << '\n';
  }
  ExperimentConfig cfg;
  cfg.task = "classify";
  cfg.encoder = EncoderConfig::preset("tiny");
  cfg.decoder = DecoderConfig::preset("tiny");
  cfg.data_manifest = (dir / "cls/manifest.csv").string();
  cfg.out_dir = (dir / "eval").string();
  cfg.finetune.n_classes = 4;
  cmd_eval(cfg, dir / "pred.csv");

  const CsvTable metrics = read_csv(dir / "eval/metrics.csv");
  const Index value_col = metrics.column("value");
  for (Index r = 0; r < metrics.size(); ++r)
    CHECK(parse_double(metrics.cell(r, value_col), "metrics") == 1.0);
  fs::remove_all(dir);
}

TEST_CASE("embed writes a latent per chip with the model grid shape") {
  const fs::path dir = scratch("geomae_cmd_embed");
  synth_classify_dataset(dir / "cls", {.n = 6, .n_classes = 2, .hw = 32}, 9);

  ExperimentConfig cfg;
  cfg.task = "classify";
  cfg.encoder = EncoderConfig::preset("tiny");
  cfg.decoder = DecoderConfig::preset("tiny");
  cfg.data_manifest = (dir / "cls/manifest.csv").string();
  cfg.out_dir = (dir / "embed").string();
  cfg.train.use_metadata = false;

  // embed requires an explicit checkpoint
  CHECK_THROWS_AS(cmd_embed(cfg), ConfigError);

  MaeModel m = MaeModel::init(cfg.encoder, cfg.decoder, 3);
  save_checkpoint(dir / "ckpt", m.params.values());
  cfg.checkpoint = (dir / "ckpt").string();
  cmd_embed(cfg);

  const CsvTable manifest = read_csv(dir / "embed/embed_manifest.csv");
  CHECK(manifest.size() == 6);
  CHECK(manifest.cell(0, manifest.column("tokens")) == "4");  // 32/16 squared
  CHECK(manifest.cell(0, manifest.column("dim")) == "64");
  Tensor latent = read_chip(dir / "embed" / manifest.cell(0, manifest.column("file")));
  CHECK(latent.shape == Shape{4, 64});
  fs::remove_all(dir);
}

TEST_CASE("checkpoint/config mismatch fails descriptively") {
  const fs::path dir = scratch("geomae_ckpt_mismatch");
  synth_classify_dataset(dir / "cls", {.n = 8, .n_classes = 2, .hw = 32}, 3);

  // checkpoint written by a different geometry
  MaeModel other = MaeModel::init(EncoderConfig{16, 1, 2, 2.0, {1, 16, 16}, 6},
                                  DecoderConfig{8, 1, 2, 2.0}, 5);
  save_checkpoint(dir / "ckpt", other.params.values());

  ExperimentConfig cfg;
  cfg.task = "classify";
  cfg.preset = "tiny";
  cfg.encoder = EncoderConfig::preset("tiny");
  cfg.decoder = DecoderConfig::preset("tiny");
  cfg.data_manifest = (dir / "cls/manifest.csv").string();
  cfg.checkpoint = (dir / "ckpt").string();
  cfg.out_dir = (dir / "out").string();
  try {
    cmd_finetune(cfg);
    FAIL("expected a shape mismatch error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("shape mismatch") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("labeled manifest round trip preserves metadata presence") {
  const fs::path dir = scratch("geomae_manifest_meta");
  LabeledDataset gpp = synth_gpp_dataset(dir / "gpp", {.n = 8, .hw = 16}, 5);
  LabeledDataset gpp_back = read_labeled_manifest(dir / "gpp/manifest.csv", "gpp");
  REQUIRE(gpp_back.items.size() == gpp.items.size());
  for (std::size_t i = 0; i < gpp.items.size(); ++i) {
    REQUIRE(gpp_back.items[i].meta.has_value());
    CHECK(gpp_back.items[i].meta->lat == gpp.items[i].meta->lat);
    CHECK(gpp_back.items[i].meta->dates[0].doy == gpp.items[i].meta->dates[0].doy);
    CHECK(gpp_back.items[i].target == gpp.items[i].target);
    CHECK(gpp_back.items[i].year == gpp.items[i].year);
  }

  // classify chips carry no metadata, and the reader respects that
  synth_classify_dataset(dir / "cls", {.n = 4, .n_classes = 2, .hw = 16}, 7);
  LabeledDataset cls = read_labeled_manifest(dir / "cls/manifest.csv", "classify");
  for (const auto& item : cls.items) CHECK_FALSE(item.meta.has_value());
  fs::remove_all(dir);
}

TEST_CASE("classify finetune learns the synthetic signal") {
  const fs::path dir = scratch("geomae_cmd_finetune");
  synth_classify_dataset(dir / "cls", {.n = 48, .n_classes = 3, .hw = 32}, 11);

  ExperimentConfig cfg;
  cfg.task = "classify";
  cfg.encoder = EncoderConfig::preset("tiny");
  cfg.decoder = DecoderConfig::preset("tiny");
  cfg.data_manifest = (dir / "cls/manifest.csv").string();
  cfg.seed = 21;
  cfg.out_dir = (dir / "ft").string();
  cfg.finetune.head = "classify";
  cfg.finetune.n_classes = 3;
  cfg.finetune.epochs = 8;
  cfg.finetune.batch_size = 8;
  cfg.finetune.lr = 5e-3;
  cmd_finetune(cfg);

  const CsvTable metrics = read_csv(dir / "ft/val_metrics.csv");
  bool found = false;
  for (Index r = 0; r < metrics.size(); ++r)
    if (metrics.cell(r, 0) == "overall_acc") {
      CHECK(parse_double(metrics.cell(r, 1), "acc") > 0.9);
      found = true;
    }
  CHECK(found);
  CHECK(fs::exists(dir / "ft/head/manifest.tsv"));
  fs::remove_all(dir);
}

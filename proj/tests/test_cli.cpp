#include <doctest.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

// Exit-code contract of the installed binary. GEOMAE_CLI_PATH is injected by
// the build.

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GEOMAE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cli exit codes") {
  const fs::path dir = fs::temp_directory_path() / "geomae_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // 2: config file missing
  CHECK(run_cli("pretrain --config " + (dir / "none.json").string()) == 2);

  // 2: config references a missing manifest
  {
    std::ofstream f(dir / "bad_manifest.json");
    f << R"({"task": "pretrain", "preset": "tiny", "data_manifest": ")" << (dir / "nope.csv").string()
      << R"("})";
  }
  CHECK(run_cli("pretrain --config " + (dir / "bad_manifest.json").string()) == 2);

  // 2: unknown config key
  {
    std::ofstream f(dir / "unknown_key.json");
    f << R"({"task": "pretrain", "presets": "tiny"})";
  }
  CHECK(run_cli("pretrain --config " + (dir / "unknown_key.json").string()) == 2);

  // 3: malformed CSV (data error) reported with the offending row
  {
    std::ofstream f(dir / "catalog.csv");
    f << "tile_id,lat,lon,urban_frac,ecoregions,class_a\nT1,0,0,0,1,0.5\nT2,only_two_cells\n";
    std::ofstream g(dir / "scenes.csv");
    g << "tile_id,year,doy,cloud_frac,water_frac,miss_b0,miss_b1,miss_b2,miss_b3,miss_b4,miss_b5\n";
  }
  CHECK(run_cli("sample-dataset --catalog " + (dir / "catalog.csv").string() + " --scenes " +
                (dir / "scenes.csv").string() + " --out " + (dir / "out").string()) == 3);

  // 0: synth then a clean sample run
  CHECK(run_cli("synth --kind catalog --out " + (dir / "cat").string() + " --seed 3 --tiles 25") == 0);
  CHECK(run_cli("sample-dataset --catalog " + (dir / "cat/catalog.csv").string() + " --scenes " +
                (dir / "cat/scenes.csv").string() + " --out " + (dir / "ds").string() +
                " --seed 3 --tiles-per-class 3 --pool-size 8 --urban-tiles 4 --entropy-tiles 4"
                " --train-sequence-cap 6 --val-sequence-cap 2 --chip-hw 16") == 0);
  CHECK(fs::exists(dir / "ds/manifest.csv"));

  // 4: numeric failure. An absurd lr x weight-decay product makes the
  // weights diverge until the loss turns non-finite; the run must abort
  // with the numeric exit code.
  {
    std::ofstream cfg(dir / "diverge.json");
    cfg << R"({"task": "pretrain", "preset": "tiny", "data_manifest": ")"
        << (dir / "ds/manifest.csv").string()
        << R"(", "out_dir": ")" << (dir / "diverge_out").string()
        << R"(", "train": {"batch_size": 1, "total_steps": 400, "crop": 16, "weight_decay": 1.0},)"
        << R"( "schedule": {"start_lr": 1e5, "max_lr": 1e6, "warmup_epochs": 0.001, "total_epochs": 1e6}})";
  }
  CHECK(run_cli("pretrain --config " + (dir / "diverge.json").string()) == 4);

  fs::remove_all(dir);
}

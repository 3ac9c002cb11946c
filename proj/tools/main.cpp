#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "geomae/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> preset;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
  auto* c = cmd->add_option("--config", flags.config_path, "experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--seed", flags.seed, "master seed (overrides the config)");
  cmd->add_option("--out", flags.out, "output directory (overrides the config)");
  cmd->add_option("--preset", flags.preset, "model preset: tiny, 300M or 600M")
      ->check(CLI::IsMember({"tiny", "300M", "600M"}));
  cmd->add_option("--override", flags.overrides, "dotted config override KEY=VALUE")
      ->take_all();
}

geomae::ExperimentConfig resolve(const CommonFlags& flags) {
  std::vector<std::string> overrides = flags.overrides;
  if (flags.preset) overrides.push_back("preset=" + *flags.preset);
  geomae::ExperimentConfig cfg = geomae::load_experiment_config(flags.config_path, overrides);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.out_dir = *flags.out;
  return cfg;
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const geomae::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const geomae::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const geomae::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geomae: multi-temporal masked-autoencoder toolkit for satellite imagery"};
  app.require_subcommand(1);

  CommonFlags pretrain_flags, finetune_flags, eval_flags, benchmark_flags, embed_flags;
  std::string predictions_path;

  auto* pretrain = app.add_subcommand("pretrain", "masked-autoencoder pretraining");
  add_common(pretrain, pretrain_flags);

  auto* sample = app.add_subcommand("sample-dataset", "build a pretraining dataset from catalogs");
  geomae::SampleDatasetOptions sample_opts;
  std::string catalog_path, scenes_path, sample_out;
  sample->add_option("--catalog", catalog_path, "tile catalog CSV")->required();
  sample->add_option("--scenes", scenes_path, "scene index CSV")->required();
  sample->add_option("--out", sample_out, "output directory")->required();
  sample->add_option("--seed", sample_opts.seed, "master seed");
  sample->add_option("--tiles-per-class", sample_opts.sampler.select.tiles_per_class, "");
  sample->add_option("--pool-size", sample_opts.sampler.select.pool_size, "");
  sample->add_option("--urban-tiles", sample_opts.sampler.select.urban_tiles, "");
  sample->add_option("--entropy-tiles", sample_opts.sampler.select.entropy_tiles, "");
  sample->add_option("--train-sequence-cap", sample_opts.sampler.train_sequence_cap, "");
  sample->add_option("--val-sequence-cap", sample_opts.sampler.val_sequence_cap, "");
  sample->add_option("--chip-hw", sample_opts.sampler.chip_hw, "materialized chip size");
  sample->add_flag("!--no-chips", sample_opts.sampler.write_chips, "skip chip materialization");

  auto* finetune = app.add_subcommand("finetune", "fine-tune a head on a labeled dataset");
  add_common(finetune, finetune_flags);

  auto* eval = app.add_subcommand("eval", "evaluate a trained model or stored predictions");
  add_common(eval, eval_flags);
  eval->add_option("--predictions", predictions_path, "CSV of stored predictions to score");

  auto* benchmark = app.add_subcommand("benchmark", "budgeted search plus seeded repeats");
  add_common(benchmark, benchmark_flags);

  auto* embed = app.add_subcommand("embed", "export frozen-encoder latents");
  add_common(embed, embed_flags);

  auto* synth = app.add_subcommand("synth", "generate synthetic catalogs and datasets");
  geomae::SynthOptions synth_opts;
  std::string synth_out;
  synth->add_option("--kind", synth_opts.kind, "catalog | classify | segment | gpp")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_opts.seed, "master seed");
  synth->add_option("--tiles", synth_opts.tiles, "catalog tile count");
  synth->add_option("--n", synth_opts.n, "labeled sample count");
  synth->add_option("--n-classes", synth_opts.n_classes, "label count");
  synth->add_option("--hw", synth_opts.hw, "chip height and width");
  synth->add_option("--frames", synth_opts.frames, "timestamps per chip");
  synth->add_option("--channels", synth_opts.channels, "bands per chip");

  CLI11_PARSE(app, argc, argv);

  if (pretrain->parsed())
    return guarded([&] { geomae::cmd_pretrain(resolve(pretrain_flags)); });
  if (sample->parsed())
    return guarded([&] {
      sample_opts.catalog_csv = catalog_path;
      sample_opts.scenes_csv = scenes_path;
      sample_opts.out_dir = sample_out;
      geomae::cmd_sample_dataset(sample_opts);
    });
  if (finetune->parsed())
    return guarded([&] { geomae::cmd_finetune(resolve(finetune_flags)); });
  if (eval->parsed())
    return guarded([&] {
      std::optional<std::filesystem::path> pred;
      if (!predictions_path.empty()) pred = predictions_path;
      geomae::cmd_eval(resolve(eval_flags), pred);
    });
  if (benchmark->parsed())
    return guarded([&] { geomae::cmd_benchmark(resolve(benchmark_flags)); });
  if (embed->parsed())
    return guarded([&] { geomae::cmd_embed(resolve(embed_flags)); });
  if (synth->parsed())
    return guarded([&] {
      synth_opts.out_dir = synth_out;
      geomae::cmd_synth(synth_opts);
    });
  return kExitOk;
}

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geomae/finetune.hpp"
#include "geomae/protocol.hpp"
#include "geomae/sampler.hpp"
#include "geomae/trainer.hpp"

namespace geomae {

/// Pretraining loop fields of the experiment file.
struct TrainSection {
  Index batch_size = 8;
  Index total_steps = 0;
  double epochs = 0.0;
  Index crop = 224;
  double mask_ratio = 0.75;
  double drop_prob = 0.1;
  bool norm_pix = false;
  bool use_metadata = true;
  bool normalize = true;
  Index checkpoint_every = 0;
  double weight_decay = 0.05;
};

struct BenchmarkSection {
  Index budget = 10;
  Index n_seeds = 10;
  SearchSpace space;
};

/// The experiment file. Unknown keys anywhere are rejected; the
/// parse -> serialize -> parse round trip is exact.
struct ExperimentConfig {
  std::string task = "pretrain";  // pretrain | classify | segment | regress
  std::string preset;             // tiny | 300M | 600M (empty with explicit encoder)
  EncoderConfig encoder = EncoderConfig::preset("tiny");
  DecoderConfig decoder = DecoderConfig::preset("tiny");
  std::string data_manifest;
  std::string checkpoint;        // backbone checkpoint directory
  std::string head_checkpoint;   // trained head (eval)
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  ScheduleConfig schedule;
  TrainSection train;
  FinetuneConfig finetune;
  BenchmarkSection benchmark;

  std::string data_kind() const;  // pretrain | classify | segment | gpp
  void validate_references() const;
};

ExperimentConfig parse_experiment_json(const std::string& json_text);
std::string experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& file,
                                        const std::vector<std::string>& overrides = {});

// Command entry points. Artifact-writing failures raise DataError; config
// problems raise ConfigError; numeric collapse raises NumericError.

void cmd_pretrain(const ExperimentConfig& cfg);

struct SampleDatasetOptions {
  std::filesystem::path catalog_csv, scenes_csv, out_dir;
  std::uint64_t seed = 0;
  SamplerConfig sampler;
};
void cmd_sample_dataset(const SampleDatasetOptions& opts);

void cmd_finetune(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& predictions);
void cmd_benchmark(const ExperimentConfig& cfg);
void cmd_embed(const ExperimentConfig& cfg);

struct SynthOptions {
  std::string kind = "catalog";  // catalog | classify | segment | gpp
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  Index tiles = 2000;   // catalog
  Index n = 96;         // labeled datasets
  Index n_classes = 4;
  Index hw = 32;
  Index frames = 1;
  Index channels = 6;
};
void cmd_synth(const SynthOptions& opts);

}  // namespace geomae

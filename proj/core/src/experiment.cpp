#include "geomae/experiment.hpp"

#include <chrono>
#include <fstream>
#include <set>

#include <json.hpp>

#include "geomae/checkpoint.hpp"
#include "geomae/chipio.hpp"
#include "geomae/csvio.hpp"
#include "geomae/dataset.hpp"

namespace geomae {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

EncoderConfig encoder_from_json(const json& j) {
  reject_unknown(j, {"dim", "depth", "heads", "mlp_ratio", "patch", "channels"}, "encoder");
  EncoderConfig c = EncoderConfig::preset("tiny");
  maybe(j, "dim", c.dim);
  maybe(j, "depth", c.depth);
  maybe(j, "heads", c.heads);
  maybe(j, "mlp_ratio", c.mlp_ratio);
  if (j.contains("patch")) {
    const Index p = j.at("patch").get<Index>();
    c.patch = {1, p, p};
  }
  maybe(j, "channels", c.channels);
  return c;
}

json encoder_to_json(const EncoderConfig& c) {
  return json{{"dim", c.dim},           {"depth", c.depth},   {"heads", c.heads},
              {"mlp_ratio", c.mlp_ratio}, {"patch", c.patch.ph}, {"channels", c.channels}};
}

DecoderConfig decoder_from_json(const json& j) {
  reject_unknown(j, {"dim", "depth", "heads", "mlp_ratio"}, "decoder");
  DecoderConfig c = DecoderConfig::preset("tiny");
  maybe(j, "dim", c.dim);
  maybe(j, "depth", c.depth);
  maybe(j, "heads", c.heads);
  maybe(j, "mlp_ratio", c.mlp_ratio);
  return c;
}

json decoder_to_json(const DecoderConfig& c) {
  return json{{"dim", c.dim}, {"depth", c.depth}, {"heads", c.heads}, {"mlp_ratio", c.mlp_ratio}};
}

ScheduleConfig schedule_from_json(const json& j) {
  reject_unknown(j, {"max_lr", "start_lr", "warmup_epochs", "total_epochs", "min_lr"}, "schedule");
  ScheduleConfig c;
  maybe(j, "max_lr", c.max_lr);
  maybe(j, "start_lr", c.start_lr);
  maybe(j, "warmup_epochs", c.warmup_epochs);
  maybe(j, "total_epochs", c.total_epochs);
  maybe(j, "min_lr", c.min_lr);
  return c;
}

json schedule_to_json(const ScheduleConfig& c) {
  return json{{"max_lr", c.max_lr},
              {"start_lr", c.start_lr},
              {"warmup_epochs", c.warmup_epochs},
              {"total_epochs", c.total_epochs},
              {"min_lr", c.min_lr}};
}

TrainSection train_from_json(const json& j) {
  reject_unknown(j,
                 {"batch_size", "total_steps", "epochs", "crop", "mask_ratio", "drop_prob",
                  "norm_pix", "use_metadata", "normalize", "checkpoint_every", "weight_decay"},
                 "train");
  TrainSection c;
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "total_steps", c.total_steps);
  maybe(j, "epochs", c.epochs);
  maybe(j, "crop", c.crop);
  maybe(j, "mask_ratio", c.mask_ratio);
  maybe(j, "drop_prob", c.drop_prob);
  maybe(j, "norm_pix", c.norm_pix);
  maybe(j, "use_metadata", c.use_metadata);
  maybe(j, "normalize", c.normalize);
  maybe(j, "checkpoint_every", c.checkpoint_every);
  maybe(j, "weight_decay", c.weight_decay);
  return c;
}

json train_to_json(const TrainSection& c) {
  return json{{"batch_size", c.batch_size},
              {"total_steps", c.total_steps},
              {"epochs", c.epochs},
              {"crop", c.crop},
              {"mask_ratio", c.mask_ratio},
              {"drop_prob", c.drop_prob},
              {"norm_pix", c.norm_pix},
              {"use_metadata", c.use_metadata},
              {"normalize", c.normalize},
              {"checkpoint_every", c.checkpoint_every},
              {"weight_decay", c.weight_decay}};
}

FinetuneConfig finetune_from_json(const json& j) {
  reject_unknown(j,
                 {"head", "n_classes", "decoder_depth", "class_weights", "temporal_mode",
                  "freeze_backbone", "use_metadata", "normalize", "epochs", "batch_size", "lr",
                  "weight_decay", "early_stop_patience"},
                 "finetune");
  FinetuneConfig c;
  maybe(j, "head", c.head);
  maybe(j, "n_classes", c.n_classes);
  maybe(j, "decoder_depth", c.decoder_depth);
  maybe(j, "class_weights", c.class_weights);
  maybe(j, "temporal_mode", c.temporal_mode);
  maybe(j, "freeze_backbone", c.freeze_backbone);
  maybe(j, "use_metadata", c.use_metadata);
  maybe(j, "normalize", c.normalize);
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "lr", c.lr);
  maybe(j, "weight_decay", c.weight_decay);
  maybe(j, "early_stop_patience", c.early_stop_patience);
  return c;
}

json finetune_to_json(const FinetuneConfig& c) {
  return json{{"head", c.head},
              {"n_classes", c.n_classes},
              {"decoder_depth", c.decoder_depth},
              {"class_weights", c.class_weights},
              {"temporal_mode", c.temporal_mode},
              {"freeze_backbone", c.freeze_backbone},
              {"use_metadata", c.use_metadata},
              {"normalize", c.normalize},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"early_stop_patience", c.early_stop_patience}};
}

BenchmarkSection benchmark_from_json(const json& j) {
  reject_unknown(j, {"budget", "n_seeds", "lr_min", "lr_max", "weight_decay_min",
                     "weight_decay_max", "decoder_depths"},
                 "benchmark");
  BenchmarkSection c;
  maybe(j, "budget", c.budget);
  maybe(j, "n_seeds", c.n_seeds);
  maybe(j, "lr_min", c.space.lr_min);
  maybe(j, "lr_max", c.space.lr_max);
  maybe(j, "weight_decay_min", c.space.weight_decay_min);
  maybe(j, "weight_decay_max", c.space.weight_decay_max);
  maybe(j, "decoder_depths", c.space.decoder_depths);
  return c;
}

json benchmark_to_json(const BenchmarkSection& c) {
  return json{{"budget", c.budget},
              {"n_seeds", c.n_seeds},
              {"lr_min", c.space.lr_min},
              {"lr_max", c.space.lr_max},
              {"weight_decay_min", c.space.weight_decay_min},
              {"weight_decay_max", c.space.weight_decay_max},
              {"decoder_depths", c.space.decoder_depths}};
}

}  // namespace

std::string ExperimentConfig::data_kind() const {
  if (task == "pretrain") return "pretrain";
  if (task == "classify") return "classify";
  if (task == "segment") return "segment";
  if (task == "regress") return "gpp";
  throw ConfigError("config: unknown task '" + task + "'");
}

void ExperimentConfig::validate_references() const {
  data_kind();  // validates the task name
  encoder.validate();
  decoder.validate(encoder.dim);
  schedule.validate();
  if (!data_manifest.empty() && !std::filesystem::exists(data_manifest))
    throw ConfigError("config: manifest not found: " + data_manifest);
  if (!checkpoint.empty() && !checkpoint_exists(checkpoint))
    throw ConfigError("config: checkpoint not found: " + checkpoint);
  if (!head_checkpoint.empty() && !checkpoint_exists(head_checkpoint))
    throw ConfigError("config: head checkpoint not found: " + head_checkpoint);
}

ExperimentConfig parse_experiment_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  reject_unknown(j,
                 {"task", "preset", "encoder", "decoder", "data_manifest", "checkpoint",
                  "head_checkpoint", "seed", "out_dir", "schedule", "train", "finetune",
                  "benchmark"},
                 "top level");
  ExperimentConfig cfg;
  try {
    maybe(j, "task", cfg.task);
    maybe(j, "preset", cfg.preset);
    if (!cfg.preset.empty()) {
      cfg.encoder = EncoderConfig::preset(cfg.preset);
      cfg.decoder = cfg.preset == "tiny" ? DecoderConfig::preset("tiny")
                                         : DecoderConfig::preset("default");
    }
    if (j.contains("encoder")) cfg.encoder = encoder_from_json(j.at("encoder"));
    if (j.contains("decoder")) cfg.decoder = decoder_from_json(j.at("decoder"));
    maybe(j, "data_manifest", cfg.data_manifest);
    maybe(j, "checkpoint", cfg.checkpoint);
    maybe(j, "head_checkpoint", cfg.head_checkpoint);
    maybe(j, "seed", cfg.seed);
    maybe(j, "out_dir", cfg.out_dir);
    if (j.contains("schedule")) cfg.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
    if (j.contains("finetune")) cfg.finetune = finetune_from_json(j.at("finetune"));
    if (j.contains("benchmark")) cfg.benchmark = benchmark_from_json(j.at("benchmark"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string experiment_to_json(const ExperimentConfig& cfg) {
  json j{{"task", cfg.task},
         {"preset", cfg.preset},
         {"encoder", encoder_to_json(cfg.encoder)},
         {"decoder", decoder_to_json(cfg.decoder)},
         {"data_manifest", cfg.data_manifest},
         {"checkpoint", cfg.checkpoint},
         {"head_checkpoint", cfg.head_checkpoint},
         {"seed", cfg.seed},
         {"out_dir", cfg.out_dir},
         {"schedule", schedule_to_json(cfg.schedule)},
         {"train", train_to_json(cfg.train)},
         {"finetune", finetune_to_json(cfg.finetune)},
         {"benchmark", benchmark_to_json(cfg.benchmark)}};
  return j.dump(2);
}

namespace {

json apply_override_value(const std::string& value) {
  // numbers, booleans and arrays parse as JSON; everything else is a string
  try {
    return json::parse(value);
  } catch (const json::parse_error&) {
    return json(value);
  }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& file,
                                        const std::vector<std::string>& overrides) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config: cannot open " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + file.string() + ": " + e.what());
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: override must be KEY=VALUE, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = apply_override_value(kv.substr(eq + 1));
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return parse_experiment_json(j.dump());
}

// ---------------------------------------------------------------------------
// commands

namespace {

MaeModel build_model(const ExperimentConfig& cfg) {
  return MaeModel::init(cfg.encoder, cfg.decoder, derive_seed(cfg.seed, "init"));
}

/// Splits checkpoint arrays into model parameters and auxiliary entries.
struct LoadedCheckpoint {
  std::vector<std::pair<std::string, Tensor>> model;
  std::optional<ChannelStats> norm;
};

LoadedCheckpoint split_checkpoint(const std::vector<std::pair<std::string, Tensor>>& arrays) {
  LoadedCheckpoint out;
  std::vector<double> mean, stdev;
  for (const auto& [name, t] : arrays) {
    if (name == "norm.mean") mean = t.v;
    else if (name == "norm.std") stdev = t.v;
    else if (name.rfind("opt.", 0) == 0 || name == "trainer.step") continue;
    else out.model.emplace_back(name, t);
  }
  if (!mean.empty()) out.norm = ChannelStats{mean, stdev};
  return out;
}

MaeModel load_backbone(const ExperimentConfig& cfg, std::optional<ChannelStats>* norm_out) {
  MaeModel model = build_model(cfg);
  if (!cfg.checkpoint.empty()) {
    LoadedCheckpoint loaded = split_checkpoint(load_checkpoint(cfg.checkpoint));
    model.params.load_values(loaded.model);
    if (norm_out) *norm_out = loaded.norm;
  }
  return model;
}

std::vector<Index> items_for_splits(const LabeledDataset& data, const std::string& split) {
  auto items = data.split_indices(split);
  if (items.empty() && split == "val") items = data.split_indices("test");
  return items;
}

void write_metrics_csv(const std::filesystem::path& file,
                       const std::map<std::string, double>& metrics) {
  CsvTable t;
  t.header = {"metric", "value"};
  for (const auto& [name, value] : metrics) t.rows.push_back({name, format_double(value)});
  write_csv(file, t);
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

void cmd_pretrain(const ExperimentConfig& cfg) {
  cfg.validate_references();
  if (cfg.data_manifest.empty()) throw ConfigError("config: manifest not found: (empty data_manifest)");
  PretrainDataset ds = load_pretrain_dataset(cfg.data_manifest, cfg.encoder.channels);
  if (ds.size() == 0) throw DataError("pretrain: manifest has no train records");

  std::optional<ChannelStats> norm;
  if (cfg.train.normalize) norm = ds.compute_stats();

  MaeModel model = build_model(cfg);
  PretrainLoopConfig loop;
  loop.batch_size = cfg.train.batch_size;
  loop.total_steps = cfg.train.total_steps;
  loop.epochs = cfg.train.epochs;
  loop.crop = cfg.train.crop;
  loop.mask_ratio = cfg.train.mask_ratio;
  loop.drop_prob = cfg.train.drop_prob;
  loop.norm_pix = cfg.train.norm_pix;
  loop.use_metadata = cfg.train.use_metadata;
  loop.checkpoint_every = cfg.train.checkpoint_every;
  loop.schedule = cfg.schedule;
  loop.adamw.weight_decay = cfg.train.weight_decay;

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  train_pretrain(model, ds.source(cfg.train.use_metadata), ds.size(), loop, cfg.seed, out,
                 norm ? &*norm : nullptr);
  std::ofstream echo(out / "config.json");
  echo << experiment_to_json(cfg) << '\n';
}

void cmd_sample_dataset(const SampleDatasetOptions& opts) {
  if (!std::filesystem::exists(opts.catalog_csv))
    throw ConfigError("config: catalog not found: " + opts.catalog_csv.string());
  if (!std::filesystem::exists(opts.scenes_csv))
    throw ConfigError("config: scene index not found: " + opts.scenes_csv.string());
  const auto catalog = read_catalog_csv(opts.catalog_csv);
  const auto scenes = read_scenes_csv(opts.scenes_csv, opts.sampler.bands);

  std::filesystem::create_directories(opts.out_dir);
  SamplerResult result = run_sampler(catalog, scenes, opts.sampler, opts.seed, opts.out_dir);

  write_manifest_csv(opts.out_dir / "manifest.csv", result.records, opts.sampler.bands);
  write_tiles_csv(opts.out_dir / "tiles.csv", result.tiles);
  write_class_stats_csv(opts.out_dir / "class_stats.csv", result.class_stats);

  const VerifyReport report = verify_dataset(result.records, result.tiles, opts.sampler);
  std::ofstream rep(opts.out_dir / "verify_report.txt");
  for (const auto& check : report.checks)
    rep << (check.pass ? "PASS" : "FAIL") << "  " << check.name << " (" << check.detail << ")\n";
  if (!report.all_pass()) throw DataError("sampler verifier found violations; see verify_report.txt");
}

void cmd_finetune(const ExperimentConfig& cfg) {
  cfg.validate_references();
  if (cfg.data_manifest.empty()) throw ConfigError("config: manifest not found: (empty data_manifest)");
  LabeledDataset data = read_labeled_manifest(cfg.data_manifest, cfg.data_kind());
  std::optional<ChannelStats> ckpt_norm;
  MaeModel model = load_backbone(cfg, &ckpt_norm);
  const ChannelStats* norm_override = ckpt_norm ? &*ckpt_norm : nullptr;

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  if (cfg.task == "regress") {
    // leave-one-year-out protocol: one fold per distinct year
    std::vector<int> years;
    for (const auto& item : data.items) years.push_back(item.year);
    const auto splits = loyo_splits(years);
    CsvTable results;
    results.header = {"test_year", "rmse", "r2"};
    for (const auto& split : splits) {
      SupervisedTask task(model, data, cfg.finetune, derive_seed(cfg.seed, "head"), norm_override);
      finetune(task, split.train, {}, derive_seed(cfg.seed, static_cast<std::uint64_t>(split.test_year)));
      const auto metrics = task.evaluate(split.test);
      results.rows.push_back({std::to_string(split.test_year), format_double(metrics.at("rmse")),
                              format_double(metrics.at("r2"))});
      save_checkpoint(out / ("head_" + std::to_string(split.test_year)), task.head_values());
    }
    write_csv(out / "loyo_results.csv", results);
  } else {
    SupervisedTask task(model, data, cfg.finetune, derive_seed(cfg.seed, "head"), norm_override);
    const auto train_items = data.split_indices("train");
    const auto val_items = data.split_indices("val");
    FinetuneResult result = finetune(task, train_items, val_items, cfg.seed);

    CsvTable trace;
    trace.header = {"epoch", "train_loss", "val_loss"};
    for (std::size_t e = 0; e < result.train_loss.size(); ++e)
      trace.rows.push_back({std::to_string(e), format_double(result.train_loss[e]),
                            e < result.val_loss.size() ? format_double(result.val_loss[e]) : ""});
    write_csv(out / "finetune_trace.csv", trace);

    save_checkpoint(out / "head", task.head_values());
    if (!cfg.finetune.freeze_backbone) save_checkpoint(out / "backbone", model.params.values());
    const auto eval_items = items_for_splits(data, "val");
    if (!eval_items.empty()) write_metrics_csv(out / "val_metrics.csv", task.evaluate(eval_items));
  }
  std::ofstream echo(out / "config.json");
  echo << experiment_to_json(cfg) << '\n';
}

void cmd_eval(const ExperimentConfig& cfg,
              const std::optional<std::filesystem::path>& predictions) {
  cfg.validate_references();
  if (cfg.data_manifest.empty()) throw ConfigError("config: manifest not found: (empty data_manifest)");
  LabeledDataset data = read_labeled_manifest(cfg.data_manifest, cfg.data_kind());
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  std::map<std::string, double> metrics;
  if (predictions) {
    // score stored predictions against the labels
    const CsvTable t = read_csv(*predictions);
    if (cfg.task == "classify") {
      const Index label_col = t.column("label");
      std::vector<Index> pred, truth;
      for (Index r = 0; r < t.size(); ++r) {
        pred.push_back(parse_int(t.cell(r, label_col), "predictions"));
        truth.push_back(data.items[static_cast<std::size_t>(r)].label);
      }
      const auto s = scores(confusion(pred, truth, cfg.finetune.n_classes));
      metrics = {{"overall_acc", s.overall_acc},
                 {"miou", s.miou},
                 {"macro_f1", s.macro_f1},
                 {"weighted_f1", s.weighted_f1},
                 {"precision", s.precision},
                 {"recall", s.recall}};
    } else if (cfg.task == "regress") {
      const Index value_col = t.column("value");
      std::vector<double> pred, truth;
      for (Index r = 0; r < t.size(); ++r) {
        pred.push_back(parse_double(t.cell(r, value_col), "predictions"));
        truth.push_back(data.items[static_cast<std::size_t>(r)].target);
      }
      const auto s = regression_scores(pred, truth);
      metrics = {{"rmse", s.rmse}, {"r2", s.r2}};
    } else {
      throw ConfigError("eval: stored predictions support classify and regress tasks");
    }
  } else {
    std::optional<ChannelStats> ckpt_norm;
    MaeModel model = load_backbone(cfg, &ckpt_norm);
    SupervisedTask task(model, data, cfg.finetune, derive_seed(cfg.seed, "head"),
                        ckpt_norm ? &*ckpt_norm : nullptr);
    if (!cfg.head_checkpoint.empty()) task.load_head_values(load_checkpoint(cfg.head_checkpoint));
    auto items = data.split_indices("test");
    if (items.empty())
      for (std::size_t i = 0; i < data.items.size(); ++i) items.push_back(static_cast<Index>(i));
    metrics = task.evaluate(items);
  }
  write_metrics_csv(out / "metrics.csv", metrics);
}

void cmd_benchmark(const ExperimentConfig& cfg) {
  cfg.validate_references();
  if (cfg.data_manifest.empty()) throw ConfigError("config: manifest not found: (empty data_manifest)");
  LabeledDataset data = read_labeled_manifest(cfg.data_manifest, cfg.data_kind());
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  ResultsRegistry registry(out / "registry.csv");

  const auto train_items = data.split_indices("train");
  const auto val_items = items_for_splits(data, "val");
  auto test_items = data.split_indices("test");
  if (test_items.empty()) test_items = val_items;

  std::optional<ChannelStats> ckpt_norm;
  MaeModel model = load_backbone(cfg, &ckpt_norm);
  const ChannelStats* norm_override = ckpt_norm ? &*ckpt_norm : nullptr;
  std::string metric_name;

  auto run_once = [&](const TrialConfig& trial, std::uint64_t seed,
                      const std::vector<Index>& eval_items) {
    FinetuneConfig ft = cfg.finetune;
    ft.lr = trial.lr;
    ft.weight_decay = trial.weight_decay;
    ft.decoder_depth = trial.decoder_depth;
    SupervisedTask task(model, data, ft, derive_seed(seed, "head"), norm_override);
    metric_name = task.primary_metric_name();
    finetune(task, train_items, val_items, seed);
    return task.primary_metric(task.evaluate(eval_items));
  };

  Index trial_counter = 0;
  auto objective = [&](const TrialConfig& trial) {
    const double t0 = now_seconds();
    const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, "search"),
                                           static_cast<std::uint64_t>(trial_counter));
    Trial row;
    row.id = trial_counter++;
    row.config = trial;
    try {
      row.score = run_once(trial, seed, val_items);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      registry.record_trial(row, now_seconds() - t0);
      throw;
    }
    registry.record_trial(row, now_seconds() - t0);
    return row.score;
  };

  const SearchResult search =
      hparam_search(objective, cfg.benchmark.space, cfg.benchmark.budget, cfg.seed);

  const std::uint64_t repeat_seed0 = derive_seed(cfg.seed, "repeat");
  Index seed_index = 0;
  auto seeded = [&](std::uint64_t seed) {
    const double t0 = now_seconds();
    const double score = run_once(search.best, seed, test_items);
    registry.record_repeat(seed_index++, seed, search.best, score, now_seconds() - t0);
    return score;
  };
  RunAggregate agg = repeat_eval(seeded, cfg.benchmark.n_seeds, repeat_seed0);

  std::ofstream report(out / "report.md");
  report << benchmark_report(search, agg, metric_name);
  std::ofstream echo(out / "config.json");
  echo << experiment_to_json(cfg) << '\n';
}

void cmd_embed(const ExperimentConfig& cfg) {
  cfg.validate_references();
  if (cfg.data_manifest.empty()) throw ConfigError("config: manifest not found: (empty data_manifest)");
  if (cfg.checkpoint.empty()) throw ConfigError("config: embed needs a checkpoint");
  std::optional<ChannelStats> norm;
  MaeModel model = load_backbone(cfg, &norm);

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out / "latents");

  // accepts either a pretraining manifest or a labeled one
  std::vector<std::pair<std::string, std::optional<GeoTemporalMetadata>>> chips;
  const std::filesystem::path root = std::filesystem::path(cfg.data_manifest).parent_path();
  if (cfg.task == "pretrain") {
    for (const auto& r : read_manifest_csv(cfg.data_manifest, cfg.encoder.channels)) {
      GeoTemporalMetadata meta;
      meta.lat = r.lat;
      meta.lon = r.lon;
      for (const auto& d : r.dates) meta.dates.push_back(d);
      chips.emplace_back(r.chip_file, meta);
    }
  } else {
    LabeledDataset data = read_labeled_manifest(cfg.data_manifest, cfg.data_kind());
    for (const auto& item : data.items) chips.emplace_back(item.chip_file, item.meta);
  }

  CsvTable manifest;
  manifest.header = {"chip_id", "file", "tokens", "dim", "t", "gh", "gw"};
  Index id = 0;
  for (const auto& [file, meta] : chips) {
    Tensor chip = read_chip(root / file);
    if (norm) norm->apply(chip);
    ReflectanceBatch batch;
    Shape s = chip.shape;
    s.insert(s.begin(), 1);
    batch.values = Tensor(s, chip.v);
    if (cfg.train.use_metadata && meta) batch.meta = {*meta};
    Var latent = encode_unmasked(model, batch, cfg.train.use_metadata);
    const GridDims dims = grid_dims_of(batch.values, model.enc.patch);
    Tensor flat({dims.tokens(), model.enc.dim}, latent->val.v);
    const std::string out_file = "latents/latent_" + std::to_string(id) + ".bin";
    write_chip(out / out_file, flat);
    manifest.rows.push_back({std::to_string(id), out_file, std::to_string(dims.tokens()),
                             std::to_string(model.enc.dim), std::to_string(dims.t),
                             std::to_string(dims.gh), std::to_string(dims.gw)});
    ++id;
  }
  write_csv(out / "embed_manifest.csv", manifest);
}

void cmd_synth(const SynthOptions& opts) {
  std::filesystem::create_directories(opts.out_dir);
  if (opts.kind == "catalog") {
    SynthCatalogOptions c;
    c.tiles = opts.tiles;
    synth_catalog_csvs(opts.out_dir / "catalog.csv", opts.out_dir / "scenes.csv", c, opts.seed);
  } else if (opts.kind == "classify") {
    SynthClassifyOptions c;
    c.n = opts.n;
    c.n_classes = opts.n_classes;
    c.hw = opts.hw;
    c.frames = opts.frames;
    c.channels = opts.channels;
    synth_classify_dataset(opts.out_dir, c, opts.seed);
  } else if (opts.kind == "segment") {
    SynthSegmentOptions c;
    c.n = opts.n;
    c.n_classes = opts.n_classes;
    c.hw = opts.hw;
    c.frames = opts.frames;
    c.channels = opts.channels;
    synth_segment_dataset(opts.out_dir, c, opts.seed);
  } else if (opts.kind == "gpp") {
    SynthGppOptions c;
    c.n = opts.n;
    c.hw = opts.hw;
    c.frames = opts.frames;
    c.channels = opts.channels;
    synth_gpp_dataset(opts.out_dir, c, opts.seed);
  } else {
    throw ConfigError("synth: unknown kind '" + opts.kind + "'");
  }
}

}  // namespace geomae

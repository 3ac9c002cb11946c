#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geomae/rng.hpp"
#include "geomae/tensor.hpp"

namespace geomae {

/// One hyperparameter configuration searched by the benchmark protocol.
struct TrialConfig {
  double lr = 1e-4;
  double weight_decay = 0.05;
  Index decoder_depth = 1;
};

struct SearchSpace {
  double lr_min = 1e-5, lr_max = 1e-2;              // sampled log-uniform
  double weight_decay_min = 1e-3, weight_decay_max = 0.1;
  std::vector<Index> decoder_depths = {1, 2, 3};
};

struct Trial {
  Index id = 0;
  TrialConfig config;
  double score = 0.0;           // validation score, higher is better
  bool failed = false;
  std::string error;
};

struct SearchResult {
  TrialConfig best;
  std::vector<Trial> trials;
};

using Objective = std::function<double(const TrialConfig&)>;

/// Budgeted search: the default strategy draws exactly `budget` seeded
/// random configurations and returns the argmax on the validation score.
/// Objective failures are recorded per trial, never fatal. The strategy is
/// pluggable through `draw`; adaptive engines can replace it.
using DrawStrategy = std::function<TrialConfig(Index trial, const SearchSpace&, Rng&)>;

TrialConfig random_draw(Index trial, const SearchSpace& space, Rng& rng);

SearchResult hparam_search(const Objective& objective, const SearchSpace& space, Index budget,
                           std::uint64_t seed, const DrawStrategy& draw = random_draw);

struct RunAggregate {
  std::vector<double> scores;       // one per seed, NaN for failed runs
  double mean = 0.0;
  double stdev = 0.0;               // sample std (n-1); 0 with flag when n == 1
  bool single_run = false;
  bool partial = false;             // at least one run failed
  std::vector<std::string> failures;
};

using SeededRun = std::function<double(std::uint64_t seed)>;

/// Runs seeds seed0 .. seed0+n-1 and aggregates mean and sample std over the
/// successful runs.
RunAggregate repeat_eval(const SeededRun& run, Index n_seeds, std::uint64_t seed0);

/// Leave-one-year-out splits: one (train, test) pair per distinct year.
struct YearSplit {
  int test_year = 0;
  std::vector<Index> train, test;  // record indices
};

std::vector<YearSplit> loyo_splits(const std::vector<int>& record_years);

/// Append-only results registry: one CSV per experiment with one row per
/// search trial and per seeded repeat.
class ResultsRegistry {
 public:
  explicit ResultsRegistry(std::filesystem::path file);
  void record_trial(const Trial& trial, double wall_seconds);
  void record_repeat(Index seed_index, std::uint64_t seed, const TrialConfig& config, double score,
                     double wall_seconds);
  const std::filesystem::path& file() const { return file_; }

 private:
  void append(const std::vector<std::string>& row);
  std::filesystem::path file_;
};

/// Markdown summary of a finished benchmark: best config, trial table,
/// seeded-repeat statistics.
std::string benchmark_report(const SearchResult& search, const RunAggregate& repeats,
                             const std::string& metric_name);

/// Unweighted mean of per-dataset primary metrics; every metric must lie in
/// [0, 1] so datasets weigh equally.
double cross_dataset_aggregate(const std::vector<double>& primary_metrics);

}  // namespace geomae

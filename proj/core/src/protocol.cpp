#include "geomae/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "geomae/csvio.hpp"

namespace geomae {

TrialConfig random_draw(Index, const SearchSpace& space, Rng& rng) {
  GEOMAE_CHECK(space.lr_min > 0.0 && space.lr_max >= space.lr_min, "search space: bad lr range");
  GEOMAE_CHECK(space.weight_decay_min > 0.0 && space.weight_decay_max >= space.weight_decay_min,
               "search space: bad weight decay range");
  GEOMAE_CHECK(!space.decoder_depths.empty(), "search space: no decoder depths");
  TrialConfig c;
  c.lr = std::exp(rng.uniform(std::log(space.lr_min), std::log(space.lr_max)));
  c.weight_decay =
      std::exp(rng.uniform(std::log(space.weight_decay_min), std::log(space.weight_decay_max)));
  c.decoder_depth =
      space.decoder_depths[static_cast<std::size_t>(rng.uniform_int(space.decoder_depths.size()))];
  return c;
}

SearchResult hparam_search(const Objective& objective, const SearchSpace& space, Index budget,
                           std::uint64_t seed, const DrawStrategy& draw) {
  GEOMAE_CHECK(budget >= 1, "hparam_search: budget must be at least 1");
  Rng rng(derive_seed(seed, "search"));
  SearchResult result;
  for (Index i = 0; i < budget; ++i) {
    Trial trial;
    trial.id = i;
    trial.config = draw(i, space, rng);
    try {
      trial.score = objective(trial.config);
      if (!std::isfinite(trial.score)) {
        trial.failed = true;
        trial.error = "non-finite score";
      }
    } catch (const std::exception& e) {
      trial.failed = true;
      trial.error = e.what();
    }
    result.trials.push_back(trial);
  }
  const Trial* best = nullptr;
  for (const auto& t : result.trials)
    if (!t.failed && (!best || t.score > best->score)) best = &t;
  GEOMAE_CHECK(best != nullptr, "hparam_search: every trial failed");
  result.best = best->config;
  return result;
}

RunAggregate repeat_eval(const SeededRun& run, Index n_seeds, std::uint64_t seed0) {
  GEOMAE_CHECK(n_seeds >= 1, "repeat_eval: need at least one seed");
  RunAggregate agg;
  for (Index i = 0; i < n_seeds; ++i) {
    const std::uint64_t seed = seed0 + static_cast<std::uint64_t>(i);
    try {
      const double score = run(seed);
      if (!std::isfinite(score)) throw NumericError("non-finite score");
      agg.scores.push_back(score);
    } catch (const std::exception& e) {
      agg.scores.push_back(std::nan(""));
      agg.partial = true;
      agg.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  Index n_ok = 0;
  double sum = 0.0;
  for (double s : agg.scores)
    if (std::isfinite(s)) {
      sum += s;
      ++n_ok;
    }
  GEOMAE_CHECK(n_ok > 0, "repeat_eval: every run failed");
  agg.mean = sum / static_cast<double>(n_ok);
  bool all_equal = true;
  double first = std::nan("");
  for (double s : agg.scores)
    if (std::isfinite(s)) {
      if (std::isnan(first)) first = s;
      else if (s != first) all_equal = false;
    }
  if (n_ok == 1) {
    agg.single_run = true;
    agg.stdev = 0.0;
  } else if (all_equal) {
    agg.mean = first;
    agg.stdev = 0.0;
  } else {
    double ss = 0.0;
    for (double s : agg.scores)
      if (std::isfinite(s)) ss += (s - agg.mean) * (s - agg.mean);
    agg.stdev = std::sqrt(ss / static_cast<double>(n_ok - 1));
  }
  return agg;
}

std::vector<YearSplit> loyo_splits(const std::vector<int>& record_years) {
  std::map<int, Index> year_count;
  for (int y : record_years) year_count[y] += 1;
  GEOMAE_CHECK(year_count.size() >= 2, "loyo_splits: need at least two distinct years");
  std::vector<YearSplit> out;
  for (const auto& [year, count] : year_count) {
    YearSplit split;
    split.test_year = year;
    for (std::size_t i = 0; i < record_years.size(); ++i)
      (record_years[i] == year ? split.test : split.train).push_back(static_cast<Index>(i));
    out.push_back(std::move(split));
  }
  return out;
}

ResultsRegistry::ResultsRegistry(std::filesystem::path file) : file_(std::move(file)) {
  if (!std::filesystem::exists(file_)) {
    std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_);
    if (!out) throw DataError("registry: cannot create " + file_.string());
    out << "kind,id,seed,lr,weight_decay,decoder_depth,score,failed,error,wall_seconds\n";
  }
}

void ResultsRegistry::append(const std::vector<std::string>& row) {
  std::ofstream out(file_, std::ios::app);
  if (!out) throw DataError("registry: cannot append to " + file_.string());
  for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
  out << '\n';
}

void ResultsRegistry::record_trial(const Trial& trial, double wall_seconds) {
  std::string err = trial.error;
  std::replace(err.begin(), err.end(), ',', ';');
  std::replace(err.begin(), err.end(), '\n', ' ');
  append({"trial", std::to_string(trial.id), "", format_double(trial.config.lr),
          format_double(trial.config.weight_decay), std::to_string(trial.config.decoder_depth),
          trial.failed ? "" : format_double(trial.score), trial.failed ? "1" : "0", err,
          format_double(wall_seconds)});
}

void ResultsRegistry::record_repeat(Index seed_index, std::uint64_t seed, const TrialConfig& config,
                                    double score, double wall_seconds) {
  append({"repeat", std::to_string(seed_index), std::to_string(seed), format_double(config.lr),
          format_double(config.weight_decay), std::to_string(config.decoder_depth),
          format_double(score), "0", "", format_double(wall_seconds)});
}

double cross_dataset_aggregate(const std::vector<double>& primary_metrics) {
  GEOMAE_CHECK(!primary_metrics.empty(), "cross_dataset_aggregate: no metrics");
  double sum = 0.0;
  for (double m : primary_metrics) {
    GEOMAE_CHECK(m >= 0.0 && m <= 1.0, "cross_dataset_aggregate: metric outside [0,1]");
    sum += m;
  }
  return sum / static_cast<double>(primary_metrics.size());
}

std::string benchmark_report(const SearchResult& search, const RunAggregate& repeats,
                             const std::string& metric_name) {
  std::ostringstream os;
  os << "# Benchmark report\n\n";
  os << "Best configuration: lr=" << format_double(search.best.lr)
     << ", weight_decay=" << format_double(search.best.weight_decay)
     << ", decoder_depth=" << search.best.decoder_depth << "\n\n";
  os << "## Search trials (" << search.trials.size() << ")\n\n";
  os << "| trial | lr | weight_decay | decoder_depth | " << metric_name << " |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& t : search.trials) {
    os << "| " << t.id << " | " << format_double(t.config.lr) << " | "
       << format_double(t.config.weight_decay) << " | " << t.config.decoder_depth << " | ";
    if (t.failed)
      os << "failed (" << t.error << ")";
    else
      os << format_double(t.score);
    os << " |\n";
  }
  os << "\n## Seeded repeats (" << repeats.scores.size() << ")\n\n";
  os << metric_name << ": mean " << format_double(repeats.mean) << ", sample std "
     << format_double(repeats.stdev);
  if (repeats.single_run) os << " (single run)";
  if (repeats.partial) os << " (partial: " << repeats.failures.size() << " failures)";
  os << "\n";
  return os.str();
}

}  // namespace geomae

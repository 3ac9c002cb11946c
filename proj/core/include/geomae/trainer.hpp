#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geomae/mae.hpp"

namespace geomae {

/// Warmup and cosine decay, expressed in epochs so any steps-per-epoch
/// granularity reuses the same anchors.
struct ScheduleConfig {
  double max_lr = 5e-4;
  double start_lr = 1e-6;
  double warmup_epochs = 40.0;
  double total_epochs = 400.0;
  double min_lr = 0.0;

  void validate() const {
    GEOMAE_CHECK(start_lr < max_lr, "schedule: start_lr must be below max_lr");
    GEOMAE_CHECK(warmup_epochs < total_epochs, "schedule: warmup must end before total_epochs");
    GEOMAE_CHECK(min_lr <= max_lr, "schedule: min_lr must not exceed max_lr");
  }
};

/// Linear start_lr -> max_lr over the warmup, then cosine max_lr -> min_lr.
/// Continuous at the junction; clamps to min_lr past total_epochs.
double lr_at(double epoch_fraction, const ScheduleConfig& cfg);

struct AugmentPlan {
  Index row = 0, col = 0;
  bool flip = false;
};

/// One crop offset and one flip decision for a whole sample; every frame of
/// the sequence gets the identical transform.
AugmentPlan sample_augment_plan(Index height, Index width, Index crop, Rng& rng);

/// chip [T,C,H,W] -> [T,C,crop,crop]; horizontal flip reverses the W axis.
Tensor apply_augment(const Tensor& chip, const AugmentPlan& plan, Index crop);

Tensor augment(const Tensor& chip, Index crop, Rng& rng);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Decoupled weight decay Adam. Decay skips norms, biases, the mask token
/// and the metadata scalars.
class AdamW {
 public:
  AdamW(const AdamWConfig& cfg, const std::vector<std::string>& param_names);

  void step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr);
  Index step_count() const { return t_; }

  static bool decays(const std::string& name);

  /// Moment arrays and step counter for bit-exact resume.
  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& arrays,
                  const ParamStore& params);

 private:
  AdamWConfig cfg_;
  Index t_ = 0;
  std::map<std::string, Tensor> m_, v_;
  std::vector<std::string> order_;
};

/// Per-channel normalization applied to reflectance before the model.
struct ChannelStats {
  std::vector<double> mean, stdev;
  void apply(Tensor& chip) const;  // [T,C,H,W] or [B,T,C,H,W]
};

struct LossPoint {
  Index step = 0;
  double epoch_fraction = 0.0;
  double lr = 0.0;
  double loss = 0.0;
};

void write_loss_trace(const std::filesystem::path& file, const std::vector<LossPoint>& trace);
/// Rows with step < below_step (all rows when below_step < 0); empty when
/// the file does not exist.
std::vector<LossPoint> read_loss_trace(const std::filesystem::path& file, Index below_step = -1);

/// A deterministic pretraining data source: yields one [T,C,H,W] chip plus
/// optional metadata per sample index.
struct ChipSample {
  Tensor chip;
  std::optional<GeoTemporalMetadata> meta;
};
using ChipSource = std::function<ChipSample(Index)>;

struct PretrainLoopConfig {
  Index batch_size = 8;
  Index total_steps = 0;       // derived from epochs when 0
  double epochs = 0.0;         // used when total_steps == 0
  Index crop = 224;
  double mask_ratio = 0.75;
  double drop_prob = 0.0;
  bool norm_pix = false;
  bool use_metadata = true;
  Index checkpoint_every = 0;  // 0 = final checkpoint only
  ScheduleConfig schedule;
  AdamWConfig adamw;
};

struct TrainResult {
  std::vector<LossPoint> trace;
  Index steps_run = 0;
};

/// Seeded pretraining loop over a chip source. Epoch order, crops, flips,
/// masking and metadata drops all derive from `seed`; two runs with the
/// same seed produce identical traces. Resuming from the checkpoint in
/// `out_dir` continues the uninterrupted trajectory bit-exactly.
TrainResult train_pretrain(MaeModel& model, const ChipSource& source, Index dataset_size,
                           const PretrainLoopConfig& cfg, std::uint64_t seed,
                           const std::filesystem::path& out_dir,
                           const ChannelStats* norm = nullptr, bool resume = false);

}  // namespace geomae

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geomae/dataset.hpp"
#include "geomae/heads.hpp"
#include "geomae/metrics.hpp"

namespace geomae {

struct FinetuneConfig {
  std::string head = "classify";  // classify | segment_deconv | segment_convup
  Index n_classes = 4;
  Index decoder_depth = 1;
  std::vector<double> class_weights;  // empty = uniform
  std::string temporal_mode = "last";  // last | concat
  bool freeze_backbone = true;
  bool use_metadata = false;
  bool normalize = false;
  Index epochs = 10;
  Index batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 0.05;
  Index early_stop_patience = 20;

  TemporalMode mode() const {
    GEOMAE_CHECK(temporal_mode == "last" || temporal_mode == "concat",
                 "finetune: temporal_mode must be last or concat");
    return temporal_mode == "last" ? TemporalMode::kLastFrame : TemporalMode::kConcatTime;
  }
};

/// A task = backbone + head + dataset wiring. Latents are cached when the
/// backbone is frozen, so epochs after the first only touch the head.
class SupervisedTask {
 public:
  /// norm_override (usually the pretraining statistics from the backbone
  /// checkpoint) wins over dataset-computed statistics when normalizing.
  SupervisedTask(MaeModel& backbone, const LabeledDataset& data, const FinetuneConfig& cfg,
                 std::uint64_t head_init_seed, const ChannelStats* norm_override = nullptr);

  Var loss_for(const std::vector<Index>& items);
  std::map<std::string, double> evaluate(const std::vector<Index>& items);
  double primary_metric(const std::map<std::string, double>& metrics) const;
  std::string primary_metric_name() const;

  ParamStore& head_params();
  MaeModel& backbone() { return backbone_; }
  const FinetuneConfig& config() const { return cfg_; }

  std::vector<Index> predict_classify(const std::vector<Index>& items);
  std::vector<double> predict_gpp(const std::vector<Index>& items);

  std::vector<std::pair<std::string, Tensor>> head_values() const;
  void load_head_values(const std::vector<std::pair<std::string, Tensor>>& arrays);

 private:
  LatentGrid latent_for(const std::vector<Index>& items, bool with_grad);
  Var logits_for(const std::vector<Index>& items, bool with_grad);

  MaeModel& backbone_;
  const LabeledDataset& data_;
  FinetuneConfig cfg_;
  GridDims grid_;
  Index out_h_ = 0, out_w_ = 0;  // segmentation target size
  std::optional<ChannelStats> norm_;
  std::unique_ptr<ClassifyHead> classify_;
  std::unique_ptr<SegmentDeconvHead> deconv_;
  std::unique_ptr<SegmentConvUpHead> convup_;
  std::unique_ptr<GppRegressor> gpp_;
  std::map<Index, Tensor> latent_cache_;  // frozen backbone only
};

struct FinetuneResult {
  double best_val_loss = 0.0;
  Index best_epoch = -1;
  std::vector<double> train_loss;  // per epoch mean
  std::vector<double> val_loss;    // per epoch
  Index epochs_run = 0;
};

/// Trains head (and backbone when unfrozen) with AdamW at a fixed learning
/// rate, early-stopping on validation loss, restoring the best snapshot.
FinetuneResult finetune(SupervisedTask& task, const std::vector<Index>& train_items,
                        const std::vector<Index>& val_items, std::uint64_t seed);

}  // namespace geomae

#include "geomae/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geomae/trainer.hpp"

namespace geomae {

namespace {

std::vector<double> uniform_weights(Index k) { return std::vector<double>(static_cast<std::size_t>(k), 1.0); }

std::vector<Index> mask_labels(const Tensor& mask, Index n_classes) {
  std::vector<Index> out(static_cast<std::size_t>(mask.numel()));
  for (Index i = 0; i < mask.numel(); ++i) {
    const Index l = static_cast<Index>(std::llround(mask[i]));
    GEOMAE_CHECK(l >= 0 && l < n_classes, "segment mask label out of range");
    out[static_cast<std::size_t>(i)] = l;
  }
  return out;
}

}  // namespace

SupervisedTask::SupervisedTask(MaeModel& backbone, const LabeledDataset& data,
                               const FinetuneConfig& cfg, std::uint64_t head_init_seed,
                               const ChannelStats* norm_override)
    : backbone_(backbone), data_(data), cfg_(cfg) {
  GEOMAE_CHECK(!data.items.empty(), "supervised task: empty dataset");
  const Tensor first = data.load_chip(0);
  Shape batched = first.shape;
  batched.insert(batched.begin(), 1);
  Tensor probe(batched, first.v);
  grid_ = grid_dims_of(probe, backbone.enc.patch);

  if (cfg.normalize && norm_override) {
    norm_ = *norm_override;
  } else if (cfg.normalize) {
    // channel statistics over the whole dataset's chips
    std::vector<double> sum(static_cast<std::size_t>(first.shape[1]), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(first.shape[1]), 0.0);
    Index count = 0;
    for (Index i = 0; i < static_cast<Index>(data.items.size()); ++i) {
      const Tensor chip = data.load_chip(i);
      const Index t = chip.shape[0], c = chip.shape[1], hw = chip.shape[2] * chip.shape[3];
      for (Index ti = 0; ti < t; ++ti)
        for (Index ci = 0; ci < c; ++ci)
          for (Index p = 0; p < hw; ++p) {
            const double v = chip.v[static_cast<std::size_t>((ti * c + ci) * hw + p)];
            sum[static_cast<std::size_t>(ci)] += v;
            sq[static_cast<std::size_t>(ci)] += v * v;
          }
      count += t * hw;
    }
    ChannelStats stats;
    for (std::size_t ci = 0; ci < sum.size(); ++ci) {
      const double mean = sum[ci] / static_cast<double>(count);
      stats.mean.push_back(mean);
      stats.stdev.push_back(std::sqrt(std::max(sq[ci] / static_cast<double>(count) - mean * mean, 1e-12)));
    }
    norm_ = stats;
  }

  const Index dim = backbone.enc.dim;
  const Index map_channels = cfg.mode() == TemporalMode::kConcatTime ? grid_.t * dim : dim;
  if (data.kind == "classify") {
    GEOMAE_CHECK(cfg.head == "classify", "classify dataset needs the classify head");
    classify_ = std::make_unique<ClassifyHead>(dim, cfg.n_classes, cfg.decoder_depth, head_init_seed);
  } else if (data.kind == "segment") {
    const Tensor mask = data.load_mask(0);
    out_h_ = mask.shape[0];
    out_w_ = mask.shape[1];
    if (cfg.head == "segment_deconv") {
      deconv_ = std::make_unique<SegmentDeconvHead>(map_channels, cfg.n_classes, head_init_seed);
    } else if (cfg.head == "segment_convup") {
      convup_ = std::make_unique<SegmentConvUpHead>(map_channels, cfg.n_classes, out_h_, grid_.gh,
                                                    cfg.decoder_depth, head_init_seed);
    } else {
      throw ConfigError("segment dataset needs segment_deconv or segment_convup, got " + cfg.head);
    }
  } else if (data.kind == "gpp") {
    const Tensor aux = data.load_aux(0);
    GppRegressor::Config gcfg;
    gcfg.latent_dim = dim;
    gcfg.tokens = grid_.tokens();
    gcfg.aux_channels = aux.shape[0];
    gcfg.aux_h = aux.shape[1];
    gcfg.aux_w = aux.shape[2];
    gpp_ = std::make_unique<GppRegressor>(gcfg, head_init_seed);
    GEOMAE_CHECK(cfg.freeze_backbone, "gpp regression trains with a frozen encoder");
  } else {
    throw ConfigError("supervised task: unknown dataset kind " + data.kind);
  }
}

ParamStore& SupervisedTask::head_params() {
  if (classify_) return classify_->params();
  if (deconv_) return deconv_->params();
  if (convup_) return convup_->params();
  return gpp_->params();
}

std::vector<std::pair<std::string, Tensor>> SupervisedTask::head_values() const {
  if (classify_) return classify_->params().values();
  if (deconv_) return deconv_->params().values();
  if (convup_) return convup_->params().values();
  return gpp_->params().values();
}

void SupervisedTask::load_head_values(const std::vector<std::pair<std::string, Tensor>>& arrays) {
  head_params().load_values(arrays);
}

LatentGrid SupervisedTask::latent_for(const std::vector<Index>& items, bool with_grad) {
  const Index b = static_cast<Index>(items.size());
  const bool frozen = cfg_.freeze_backbone;

  auto encode_one = [&](Index item) {
    Tensor chip = data_.load_chip(item);
    if (norm_) norm_->apply(chip);
    ReflectanceBatch batch;
    Shape s = chip.shape;
    s.insert(s.begin(), 1);
    batch.values = Tensor(s, chip.v);
    if (cfg_.use_metadata && data_.items[static_cast<std::size_t>(item)].meta)
      batch.meta = {*data_.items[static_cast<std::size_t>(item)].meta};
    return encode_unmasked(backbone_, batch, cfg_.use_metadata);
  };

  if (frozen) {
    Tensor all({b, grid_.tokens(), backbone_.enc.dim});
    for (Index i = 0; i < b; ++i) {
      const Index item = items[static_cast<std::size_t>(i)];
      auto it = latent_cache_.find(item);
      if (it == latent_cache_.end())
        it = latent_cache_.emplace(item, encode_one(item)->val).first;
      std::copy(it->second.v.begin(), it->second.v.end(),
                all.v.begin() + static_cast<std::ptrdiff_t>(i * it->second.numel()));
    }
    return {constant(std::move(all)), grid_};
  }

  // unfrozen: batch through the encoder on one graph
  Tensor values;
  ReflectanceBatch batch;
  bool with_meta = cfg_.use_metadata;
  for (Index i = 0; i < b; ++i) {
    const Index item = items[static_cast<std::size_t>(i)];
    Tensor chip = data_.load_chip(item);
    if (norm_) norm_->apply(chip);
    if (i == 0) {
      Shape s = chip.shape;
      s.insert(s.begin(), b);
      values = Tensor(s);
    }
    std::copy(chip.v.begin(), chip.v.end(),
              values.v.begin() + static_cast<std::ptrdiff_t>(i * chip.numel()));
    if (with_meta) {
      const auto& meta = data_.items[static_cast<std::size_t>(item)].meta;
      GEOMAE_CHECK(meta.has_value(), "use_metadata set but an item has none");
      batch.meta.push_back(*meta);
    }
  }
  batch.values = std::move(values);
  Var latent = encode_unmasked(backbone_, batch, with_meta);
  if (!with_grad) latent = constant(latent->val);
  return {latent, grid_};
}

Var SupervisedTask::logits_for(const std::vector<Index>& items, bool with_grad) {
  LatentGrid latent = latent_for(items, with_grad && !cfg_.freeze_backbone);
  if (classify_) return classify_->forward(latent);
  if (deconv_) return deconv_->forward(latent, out_h_, out_w_, cfg_.mode());
  return convup_->forward(latent, out_h_, out_w_, cfg_.mode());
}

Var SupervisedTask::loss_for(const std::vector<Index>& items) {
  GEOMAE_CHECK(!items.empty(), "loss_for: empty batch");
  if (gpp_) {
    LatentGrid latent = latent_for(items, false);
    const Index b = static_cast<Index>(items.size());
    Tensor aux0 = data_.load_aux(items[0]);
    Tensor aux({b, aux0.shape[0], aux0.shape[1], aux0.shape[2]});
    Tensor target({b});
    for (Index i = 0; i < b; ++i) {
      const Tensor a = data_.load_aux(items[static_cast<std::size_t>(i)]);
      std::copy(a.v.begin(), a.v.end(), aux.v.begin() + static_cast<std::ptrdiff_t>(i * a.numel()));
      target[i] = data_.items[static_cast<std::size_t>(items[static_cast<std::size_t>(i)])].target;
    }
    Var pred = gpp_->forward(latent, constant(std::move(aux)));
    return mse_to_const(pred, target);
  }

  Var logits = logits_for(items, true);
  const auto weights =
      cfg_.class_weights.empty() ? uniform_weights(cfg_.n_classes) : cfg_.class_weights;
  if (classify_) {
    std::vector<Index> labels;
    for (Index item : items) labels.push_back(data_.items[static_cast<std::size_t>(item)].label);
    return weighted_cross_entropy(logits, labels, weights);
  }
  std::vector<Index> labels;
  for (Index item : items) {
    const auto pixel_labels = mask_labels(data_.load_mask(item), cfg_.n_classes);
    labels.insert(labels.end(), pixel_labels.begin(), pixel_labels.end());
  }
  return segmentation_loss(logits, labels, weights);
}

std::vector<Index> SupervisedTask::predict_classify(const std::vector<Index>& items) {
  Var logits = logits_for(items, false);
  std::vector<Index> out;
  const Index k = logits->val.shape.back();
  const Index rows = logits->val.numel() / k;
  for (Index r = 0; r < rows; ++r) {
    Index best = 0;
    for (Index c = 1; c < k; ++c)
      if (logits->val[r * k + c] > logits->val[r * k + best]) best = c;
    out.push_back(best);
  }
  return out;
}

std::vector<double> SupervisedTask::predict_gpp(const std::vector<Index>& items) {
  LatentGrid latent = latent_for(items, false);
  const Index b = static_cast<Index>(items.size());
  Tensor aux0 = data_.load_aux(items[0]);
  Tensor aux({b, aux0.shape[0], aux0.shape[1], aux0.shape[2]});
  for (Index i = 0; i < b; ++i) {
    const Tensor a = data_.load_aux(items[static_cast<std::size_t>(i)]);
    std::copy(a.v.begin(), a.v.end(), aux.v.begin() + static_cast<std::ptrdiff_t>(i * a.numel()));
  }
  Var pred = gpp_->forward(latent, constant(std::move(aux)));
  return pred->val.v;
}

std::map<std::string, double> SupervisedTask::evaluate(const std::vector<Index>& items) {
  GEOMAE_CHECK(!items.empty(), "evaluate: empty item list");
  std::map<std::string, double> out;
  if (gpp_) {
    std::vector<double> pred = predict_gpp(items);
    std::vector<double> truth;
    for (Index item : items) truth.push_back(data_.items[static_cast<std::size_t>(item)].target);
    const RegressionScores rs = regression_scores(pred, truth);
    out["rmse"] = rs.rmse;
    out["r2"] = rs.r2;
    return out;
  }
  if (classify_) {
    std::vector<Index> truth;
    for (Index item : items) truth.push_back(data_.items[static_cast<std::size_t>(item)].label);
    const auto cm = confusion(predict_classify(items), truth, cfg_.n_classes);
    const auto s = scores(cm);
    out["overall_acc"] = s.overall_acc;
    out["miou"] = s.miou;
    out["macro_f1"] = s.macro_f1;
    out["weighted_f1"] = s.weighted_f1;
    return out;
  }
  // segmentation: accumulate pixel-level confusion item by item
  ConfusionMatrix cm(cfg_.n_classes);
  for (Index item : items) {
    const std::vector<Index> single = {item};
    Var logits = logits_for(single, false);
    const Index k = cfg_.n_classes;
    const Index hw = out_h_ * out_w_;
    const auto truth = mask_labels(data_.load_mask(item), k);
    for (Index p = 0; p < hw; ++p) {
      Index best = 0;
      for (Index c = 1; c < k; ++c)
        if (logits->val[c * hw + p] > logits->val[best * hw + p]) best = c;
      cm.at(truth[static_cast<std::size_t>(p)], best) += 1;
    }
  }
  const auto s = scores(cm);
  out["overall_acc"] = s.overall_acc;
  out["miou"] = s.miou;
  out["macro_f1"] = s.macro_f1;
  out["weighted_f1"] = s.weighted_f1;
  out["precision"] = s.precision;
  out["recall"] = s.recall;
  return out;
}

std::string SupervisedTask::primary_metric_name() const {
  if (gpp_) return "r2";
  if (classify_) return "overall_acc";
  return "miou";
}

double SupervisedTask::primary_metric(const std::map<std::string, double>& metrics) const {
  return metrics.at(primary_metric_name());
}

FinetuneResult finetune(SupervisedTask& task, const std::vector<Index>& train_items,
                        const std::vector<Index>& val_items, std::uint64_t seed) {
  GEOMAE_CHECK(!train_items.empty(), "finetune: no training items");
  const FinetuneConfig& cfg = task.config();

  AdamWConfig opt_cfg;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW head_opt(opt_cfg, task.head_params().names());
  std::optional<AdamW> backbone_opt;
  if (!cfg.freeze_backbone) backbone_opt.emplace(opt_cfg, task.backbone().params.names());

  FinetuneResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::string, Tensor>> best_head = task.head_values();
  std::vector<std::pair<std::string, Tensor>> best_backbone;
  if (!cfg.freeze_backbone) best_backbone = task.backbone().params.values();
  Index patience_left = cfg.early_stop_patience;

  const std::uint64_t order_seed = derive_seed(seed, "finetune-order");
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Index> order = train_items;
    Rng rng(derive_seed(order_seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    Index batches = 0;
    for (Index start = 0; start < static_cast<Index>(order.size()); start += cfg.batch_size) {
      const Index end = std::min<Index>(start + cfg.batch_size, static_cast<Index>(order.size()));
      std::vector<Index> batch(order.begin() + start, order.begin() + end);
      Var loss = task.loss_for(batch);
      if (!std::isfinite(loss->val[0]))
        throw NumericError("fine-tuning loss is not finite at epoch " + std::to_string(epoch));
      task.head_params().zero_grads();
      if (!cfg.freeze_backbone) task.backbone().params.zero_grads();
      backward(loss);
      head_opt.step(task.head_params(), task.head_params().grads(), cfg.lr);
      if (backbone_opt)
        backbone_opt->step(task.backbone().params, task.backbone().params.grads(), cfg.lr);
      epoch_loss += loss->val[0];
      ++batches;
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(batches));
    ++result.epochs_run;

    if (!val_items.empty()) {
      const double val = task.loss_for(val_items)->val[0];
      result.val_loss.push_back(val);
      if (val < best_val) {
        best_val = val;
        result.best_val_loss = val;
        result.best_epoch = epoch;
        best_head = task.head_values();
        if (!cfg.freeze_backbone) best_backbone = task.backbone().params.values();
        patience_left = cfg.early_stop_patience;
      } else if (--patience_left <= 0) {
        break;
      }
    }
  }

  if (!val_items.empty()) {
    task.load_head_values(best_head);
    if (!cfg.freeze_backbone) task.backbone().params.load_values(best_backbone);
  }
  return result;
}

}  // namespace geomae

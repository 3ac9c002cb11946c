#include "geomae/trainer.hpp"

#include <cmath>
#include <fstream>

#include "geomae/checkpoint.hpp"

namespace geomae {

double lr_at(double epoch_fraction, const ScheduleConfig& cfg) {
  cfg.validate();
  if (epoch_fraction <= 0.0) return cfg.start_lr;
  if (epoch_fraction < cfg.warmup_epochs)
    return cfg.start_lr + (cfg.max_lr - cfg.start_lr) * (epoch_fraction / cfg.warmup_epochs);
  double progress = (epoch_fraction - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs);
  if (progress > 1.0) progress = 1.0;
  return cfg.min_lr + 0.5 * (cfg.max_lr - cfg.min_lr) *
                          (1.0 + std::cos(3.14159265358979323846 * progress));
}

AugmentPlan sample_augment_plan(Index height, Index width, Index crop, Rng& rng) {
  GEOMAE_CHECK(height >= crop && width >= crop, "augment: input smaller than crop target");
  AugmentPlan plan;
  plan.row = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(height - crop + 1)));
  plan.col = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(width - crop + 1)));
  plan.flip = rng.bernoulli(0.5);
  return plan;
}

Tensor apply_augment(const Tensor& chip, const AugmentPlan& plan, Index crop) {
  GEOMAE_CHECK(chip.rank() == 4, "augment: chip must be [T,C,H,W]");
  const Index t = chip.shape[0], c = chip.shape[1], h = chip.shape[2], w = chip.shape[3];
  GEOMAE_CHECK(plan.row >= 0 && plan.col >= 0 && plan.row + crop <= h && plan.col + crop <= w,
               "augment: crop window out of bounds");
  Tensor out({t, c, crop, crop});
  for (Index ti = 0; ti < t; ++ti)
    for (Index ci = 0; ci < c; ++ci)
      for (Index y = 0; y < crop; ++y)
        for (Index x = 0; x < crop; ++x) {
          const Index sx = plan.flip ? plan.col + crop - 1 - x : plan.col + x;
          out.at(ti, ci, y, x) = chip.at(ti, ci, plan.row + y, sx);
        }
  return out;
}

Tensor augment(const Tensor& chip, Index crop, Rng& rng) {
  GEOMAE_CHECK(chip.rank() == 4, "augment: chip must be [T,C,H,W]");
  AugmentPlan plan = sample_augment_plan(chip.shape[2], chip.shape[3], crop, rng);
  return apply_augment(chip, plan, crop);
}

AdamW::AdamW(const AdamWConfig& cfg, const std::vector<std::string>& param_names)
    : cfg_(cfg), order_(param_names) {}

bool AdamW::decays(const std::string& name) {
  auto ends_with = [&](const char* s) {
    const std::string suf(s);
    return name.size() >= suf.size() &&
           name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with(".bias") || ends_with(".beta") || ends_with(".gamma")) return false;
  if (ends_with("mask_token")) return false;
  if (name.rfind("meta.", 0) == 0) return false;
  return true;
}

void AdamW::step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& name : order_) {
    const Var& p = params.get(name);
    auto git = grads.find(name);
    GEOMAE_CHECK(git != grads.end(), "AdamW: missing gradient for " + name);
    const Tensor& g = git->second;
    Tensor& m = m_.try_emplace(name, Tensor::zeros(p->val.shape)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros(p->val.shape)).first->second;
    const bool wd = decays(name) && cfg_.weight_decay > 0.0;
    for (Index i = 0; i < p->val.numel(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double x = p->val[i];
      if (wd) x -= lr * cfg_.weight_decay * x;
      x -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      p->val[i] = x;
    }
  }
}

std::vector<std::pair<std::string, Tensor>> AdamW::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("opt.t", Tensor::scalar(static_cast<double>(t_)));
  for (const auto& name : order_) {
    auto mit = m_.find(name);
    if (mit == m_.end()) continue;
    out.emplace_back("opt.m." + name, mit->second);
    out.emplace_back("opt.v." + name, v_.at(name));
  }
  return out;
}

void AdamW::load_state(const std::vector<std::pair<std::string, Tensor>>& arrays,
                       const ParamStore& params) {
  for (const auto& [name, t] : arrays) {
    if (name == "opt.t") {
      t_ = static_cast<Index>(std::llround(t[0]));
    } else if (name.rfind("opt.m.", 0) == 0) {
      const std::string pname = name.substr(6);
      GEOMAE_CHECK(params.has(pname), "optimizer state for unknown parameter " + pname);
      GEOMAE_CHECK(params.get(pname)->val.shape == t.shape,
                   "optimizer state shape mismatch for " + pname);
      m_[pname] = t;
    } else if (name.rfind("opt.v.", 0) == 0) {
      const std::string pname = name.substr(6);
      GEOMAE_CHECK(params.has(pname) && params.get(pname)->val.shape == t.shape,
                   "optimizer state shape mismatch for " + pname);
      v_[pname] = t;
    }
  }
}

void ChannelStats::apply(Tensor& chip) const {
  const int channel_axis = chip.rank() == 5 ? 2 : 1;
  GEOMAE_CHECK(chip.rank() == 4 || chip.rank() == 5, "ChannelStats: chip must be [T,C,H,W] or [B,T,C,H,W]");
  const Index c = chip.shape[static_cast<std::size_t>(channel_axis)];
  GEOMAE_CHECK(static_cast<Index>(mean.size()) == c && static_cast<Index>(stdev.size()) == c,
               "ChannelStats: channel count mismatch");
  Index outer = 1, inner = 1;
  for (int i = 0; i < channel_axis; ++i) outer *= chip.shape[static_cast<std::size_t>(i)];
  for (int i = channel_axis + 1; i < chip.rank(); ++i) inner *= chip.shape[static_cast<std::size_t>(i)];
  for (Index o = 0; o < outer; ++o)
    for (Index ci = 0; ci < c; ++ci) {
      const double mu = mean[static_cast<std::size_t>(ci)];
      const double inv = 1.0 / stdev[static_cast<std::size_t>(ci)];
      double* base = chip.v.data() + (o * c + ci) * inner;
      for (Index i = 0; i < inner; ++i) base[i] = (base[i] - mu) * inv;
    }
}

void write_loss_trace(const std::filesystem::path& file, const std::vector<LossPoint>& trace) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write loss trace: " + file.string());
  out << "step,epoch_fraction,lr,loss\n";
  char buf[128];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(p.step),
                  p.epoch_fraction, p.lr, p.loss);
    out << buf;
  }
}

std::vector<LossPoint> read_loss_trace(const std::filesystem::path& file, Index below_step) {
  std::vector<LossPoint> out;
  std::ifstream in(file);
  if (!in) return out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    LossPoint p;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lg,%lg,%lg", &step, &p.epoch_fraction, &p.lr, &p.loss) != 4)
      continue;
    p.step = step;
    if (below_step < 0 || p.step < below_step) out.push_back(p);
  }
  return out;
}

namespace {

struct EpochOrder {
  Index epoch = -1;
  std::vector<Index> perm;
  void ensure(Index epoch_wanted, Index n, std::uint64_t data_seed) {
    if (epoch == epoch_wanted) return;
    epoch = epoch_wanted;
    Rng rng(derive_seed(data_seed, static_cast<std::uint64_t>(epoch_wanted)));
    perm = rng.permutation(n);
  }
};

}  // namespace

TrainResult train_pretrain(MaeModel& model, const ChipSource& source, Index dataset_size,
                           const PretrainLoopConfig& cfg, std::uint64_t seed,
                           const std::filesystem::path& out_dir, const ChannelStats* norm,
                           bool resume) {
  GEOMAE_CHECK(dataset_size > 0, "train_pretrain: empty dataset");
  GEOMAE_CHECK(cfg.batch_size > 0, "train_pretrain: batch size must be positive");
  cfg.schedule.validate();

  Index total_steps = cfg.total_steps;
  if (total_steps == 0) {
    GEOMAE_CHECK(cfg.epochs > 0.0, "train_pretrain: need total_steps or epochs");
    total_steps = static_cast<Index>(
        std::ceil(cfg.epochs * static_cast<double>(dataset_size) / static_cast<double>(cfg.batch_size)));
  }

  const std::uint64_t data_seed = derive_seed(seed, "data");
  const std::uint64_t aug_seed = derive_seed(seed, "aug");
  const std::uint64_t sample_seed = derive_seed(seed, "sample");

  AdamW opt(cfg.adamw, model.params.names());
  Index start_step = 0;
  const auto ckpt_dir = out_dir / "checkpoint";
  std::vector<LossPoint> prior_trace;
  if (resume && checkpoint_exists(ckpt_dir)) {
    auto arrays = load_checkpoint(ckpt_dir);
    std::vector<std::pair<std::string, Tensor>> model_arrays;
    for (const auto& [name, t] : arrays) {
      if (name == "trainer.step") start_step = static_cast<Index>(std::llround(t[0]));
      else if (name.rfind("opt.", 0) == 0) continue;
      else if (name.rfind("norm.", 0) == 0) continue;
      else model_arrays.emplace_back(name, t);
    }
    model.params.load_values(model_arrays);
    opt.load_state(arrays, model.params);
    prior_trace = read_loss_trace(out_dir / "loss_trace.csv", start_step);
  }

  auto save = [&](Index step) {
    auto arrays = model.params.values();
    for (auto& kv : opt.state()) arrays.push_back(std::move(kv));
    arrays.emplace_back("trainer.step", Tensor::scalar(static_cast<double>(step)));
    if (norm) {
      arrays.emplace_back("norm.mean", Tensor({static_cast<Index>(norm->mean.size())}, norm->mean));
      arrays.emplace_back("norm.std", Tensor({static_cast<Index>(norm->stdev.size())}, norm->stdev));
    }
    save_checkpoint(ckpt_dir, arrays);
  };

  EpochOrder order;
  TrainResult result;
  result.trace = std::move(prior_trace);
  PretrainOptions step_opts;
  step_opts.mask_ratio = cfg.mask_ratio;
  step_opts.drop_prob = cfg.drop_prob;
  step_opts.norm_pix = cfg.norm_pix;

  for (Index step = start_step; step < total_steps; ++step) {
    const Index b = cfg.batch_size;
    ReflectanceBatch batch;
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(b));
    for (Index i = 0; i < b; ++i) {
      const Index pos = step * b + i;
      const Index epoch = pos / dataset_size;
      order.ensure(epoch, dataset_size, data_seed);
      const Index idx = order.perm[static_cast<std::size_t>(pos % dataset_size)];
      ChipSample sample = source(idx);
      GEOMAE_CHECK(sample.chip.rank() == 4, "chip source must yield [T,C,H,W]");
      Rng aug_rng(derive_seed(aug_seed, static_cast<std::uint64_t>(pos)));
      Tensor chip = augment(sample.chip, cfg.crop, aug_rng);
      if (norm) norm->apply(chip);
      if (i == 0) {
        Shape s = chip.shape;
        s.insert(s.begin(), b);
        batch.values = Tensor(s);
        if (cfg.use_metadata && sample.meta) batch.meta.resize(static_cast<std::size_t>(b));
      }
      GEOMAE_CHECK(chip.numel() * b == batch.values.numel(), "chip shapes must be uniform");
      std::copy(chip.v.begin(), chip.v.end(),
                batch.values.v.begin() + static_cast<std::ptrdiff_t>(i * chip.numel()));
      if (!batch.meta.empty()) {
        GEOMAE_CHECK(sample.meta.has_value(), "metadata must be present for every chip or none");
        batch.meta[static_cast<std::size_t>(i)] = *sample.meta;
      }
      seeds[static_cast<std::size_t>(i)] = derive_seed(sample_seed, static_cast<std::uint64_t>(pos));
    }

    const double epoch_fraction =
        static_cast<double>(step * b) / static_cast<double>(dataset_size);
    const double lr = lr_at(epoch_fraction, cfg.schedule);

    PretrainGrad g = pretrain_grad(model, batch, step_opts, seeds);
    if (!std::isfinite(g.loss))
      throw NumericError("pretraining loss is not finite at step " + std::to_string(step));
    opt.step(model.params, g.grads, lr);
    result.trace.push_back({step, epoch_fraction, lr, g.loss});
    ++result.steps_run;

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < total_steps)
      save(step + 1);
  }
  save(total_steps);
  write_loss_trace(out_dir / "loss_trace.csv", result.trace);
  return result;
}

}  // namespace geomae

#include "geomae/mae.hpp"

#include <cmath>

namespace geomae {

EncoderConfig EncoderConfig::preset(const std::string& name) {
  if (name == "tiny") return {64, 2, 4, 4.0, {1, 16, 16}, 6};
  if (name == "300M") return {1024, 24, 16, 4.0, {1, 16, 16}, 6};
  if (name == "600M") return {1280, 32, 16, 4.0, {1, 14, 14}, 6};
  throw ConfigError("unknown encoder preset: " + name);
}

void EncoderConfig::validate() const {
  GEOMAE_CHECK(dim > 0 && depth >= 0 && heads > 0, "encoder config: bad dims");
  GEOMAE_CHECK(dim % heads == 0, "encoder config: dim must be divisible by heads");
  GEOMAE_CHECK(patch.pt == 1, "encoder config: temporal patch extent must be 1");
  GEOMAE_CHECK(channels > 0, "encoder config: channels must be positive");
}

DecoderConfig DecoderConfig::preset(const std::string& name) {
  if (name == "default") return {512, 8, 16, 4.0};
  if (name == "tiny") return {32, 1, 4, 4.0};
  throw ConfigError("unknown decoder preset: " + name);
}

void DecoderConfig::validate(Index) const {
  GEOMAE_CHECK(dim > 0 && depth >= 0 && heads > 0, "decoder config: bad dims");
  GEOMAE_CHECK(dim % heads == 0, "decoder config: dim must be divisible by heads");
}

Var ParamStore::add(const std::string& name, Tensor init) {
  GEOMAE_CHECK(!has(name), "duplicate parameter: " + name);
  Var v = make_var(std::move(init), true);
  order_.push_back(name);
  by_name_.emplace(name, v);
  return v;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  GEOMAE_CHECK(it != by_name_.end(), "unknown parameter: " + name);
  return it->second;
}

Index ParamStore::total_params() const {
  Index n = 0;
  for (const auto& [name, v] : by_name_) n += v->val.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : by_name_) {
    v->ensure_grad();
    std::fill(v->grad.v.begin(), v->grad.v.end(), 0.0);
  }
}

std::vector<std::pair<std::string, Tensor>> ParamStore::values() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(order_.size());
  for (const auto& name : order_) out.emplace_back(name, by_name_.at(name)->val);
  return out;
}

std::map<std::string, Tensor> ParamStore::grads() const {
  std::map<std::string, Tensor> out;
  for (const auto& name : order_) {
    const Var& v = by_name_.at(name);
    out[name] = v->grad.shape == v->val.shape ? v->grad : Tensor::zeros(v->val.shape);
  }
  return out;
}

void ParamStore::load_values(const std::vector<std::pair<std::string, Tensor>>& arrays) {
  for (const auto& [name, t] : arrays) {
    auto it = by_name_.find(name);
    GEOMAE_CHECK(it != by_name_.end(), "checkpoint has unknown parameter: " + name);
    GEOMAE_CHECK(it->second->val.shape == t.shape,
                 "checkpoint shape mismatch for " + name + ": " + shape_str(t.shape) +
                     " vs " + shape_str(it->second->val.shape));
    it->second->val = t;
  }
}

namespace {

void block_specs(std::vector<ParamSpec>& out, const std::string& prefix, Index dim, Index hidden,
                 Index depth) {
  for (Index i = 0; i < depth; ++i) {
    const std::string b = prefix + "block" + std::to_string(i) + ".";
    out.push_back({b + "ln1.gamma", {dim}});
    out.push_back({b + "ln1.beta", {dim}});
    out.push_back({b + "attn.qkv.weight", {3 * dim, dim}});
    out.push_back({b + "attn.qkv.bias", {3 * dim}});
    out.push_back({b + "attn.proj.weight", {dim, dim}});
    out.push_back({b + "attn.proj.bias", {dim}});
    out.push_back({b + "ln2.gamma", {dim}});
    out.push_back({b + "ln2.beta", {dim}});
    out.push_back({b + "mlp.fc1.weight", {hidden, dim}});
    out.push_back({b + "mlp.fc1.bias", {hidden}});
    out.push_back({b + "mlp.fc2.weight", {dim, hidden}});
    out.push_back({b + "mlp.fc2.bias", {dim}});
  }
}

}  // namespace

std::vector<ParamSpec> mae_parameter_specs(const EncoderConfig& enc, const DecoderConfig& dec) {
  enc.validate();
  dec.validate(enc.dim);
  std::vector<ParamSpec> out;
  out.push_back({"enc.patch_embed.weight", {enc.dim, enc.patch_pixels()}});
  out.push_back({"enc.patch_embed.bias", {enc.dim}});
  block_specs(out, "enc.", enc.dim, enc.mlp_hidden(), enc.depth);
  out.push_back({"enc.norm.gamma", {enc.dim}});
  out.push_back({"enc.norm.beta", {enc.dim}});
  out.push_back({"meta.w_time", {1}});
  out.push_back({"meta.w_loc", {1}});
  out.push_back({"dec.embed.weight", {dec.dim, enc.dim}});
  out.push_back({"dec.embed.bias", {dec.dim}});
  out.push_back({"dec.mask_token", {dec.dim}});
  block_specs(out, "dec.", dec.dim, dec.mlp_hidden(), dec.depth);
  out.push_back({"dec.norm.gamma", {dec.dim}});
  out.push_back({"dec.norm.beta", {dec.dim}});
  out.push_back({"dec.pred.weight", {enc.patch.ph * enc.patch.pw * enc.channels, dec.dim}});
  out.push_back({"dec.pred.bias", {enc.patch.ph * enc.patch.pw * enc.channels}});
  return out;
}

Index spec_param_count(const std::vector<ParamSpec>& specs, const std::string& prefix) {
  Index n = 0;
  for (const auto& s : specs)
    if (s.name.rfind(prefix, 0) == 0) n += s.numel();
  return n;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Tensor default_param_init(const ParamSpec& spec, std::uint64_t init_seed) {
  Tensor t(spec.shape);
  if (spec.name == "meta.w_time" || spec.name == "meta.w_loc") {
    t[0] = 1.0;  // metadata contributes from step 0
    return t;
  }
  if (ends_with(spec.name, ".gamma")) {
    for (double& x : t.v) x = 1.0;
    return t;
  }
  if (ends_with(spec.name, ".bias") || ends_with(spec.name, ".beta")) return t;
  // weights and the mask token: truncated normal, sigma 0.02
  Rng rng(derive_seed(init_seed, spec.name));
  for (double& x : t.v) x = rng.truncated_normal(0.02);
  return t;
}

MaeModel MaeModel::init(const EncoderConfig& enc, const DecoderConfig& dec, std::uint64_t init_seed) {
  MaeModel m;
  m.enc = enc;
  m.dec = dec;
  for (const auto& spec : mae_parameter_specs(enc, dec))
    m.params.add(spec.name, default_param_init(spec, init_seed));
  return m;
}

TokenGrid embed(const Tensor& values, const Var& w, const Var& b, PatchSize patch) {
  const GridDims dims = grid_dims_of(values, patch);
  const Index batch = values.shape[0];
  const Index pixels = patch.pixels(values.shape[2]);
  GEOMAE_CHECK(w->val.rank() == 2 && w->val.shape[1] == pixels,
               "embed: projection must map " + std::to_string(pixels) + " pixels");
  const Tensor pix = patchify_pixels(values, patch);
  Var tokens = linear(constant(Tensor({batch * dims.tokens(), pixels}, pix.v)), w, b);
  return {reshape(tokens, {batch, dims.tokens(), w->val.shape[0]}), dims, patch};
}

namespace {

Var attention(const ParamStore& params, const std::string& prefix, Index heads, const Var& x) {
  const Index b = x->val.shape[0], k = x->val.shape[1], d = x->val.shape[2];
  const Index hd = d / heads;
  Var qkv = linear(reshape(x, {b * k, d}), params.get(prefix + "qkv.weight"),
                   params.get(prefix + "qkv.bias"));
  auto split_heads = [&](Index offset) {
    Var part = slice_lastdim(qkv, offset, d);                      // [B*K, D]
    part = reshape(part, {b, k, heads, hd});
    return permute(part, {0, 2, 1, 3});                            // [B, H, K, hd]
  };
  Var q = split_heads(0);
  Var kk = split_heads(d);
  Var v = split_heads(2 * d);
  Var att = bmm(q, transpose_last2(kk));                           // [B, H, K, K]
  att = scale(att, 1.0 / std::sqrt(static_cast<double>(hd)));
  att = softmax_lastdim(att);
  Var out = bmm(att, v);                                           // [B, H, K, hd]
  out = reshape(permute(out, {0, 2, 1, 3}), {b * k, d});
  out = linear(out, params.get(prefix + "proj.weight"), params.get(prefix + "proj.bias"));
  return reshape(out, {b, k, d});
}

}  // namespace

Var transformer_forward(const ParamStore& params, const std::string& prefix, Index depth,
                        Index heads, const Var& tokens) {
  GEOMAE_CHECK(tokens->val.rank() == 3, "transformer_forward: expected [B,K,D]");
  const Index b = tokens->val.shape[0], k = tokens->val.shape[1], d = tokens->val.shape[2];
  Var x = tokens;
  for (Index i = 0; i < depth; ++i) {
    const std::string bp = prefix + "block" + std::to_string(i) + ".";
    Var h = layernorm_lastdim(x, params.get(bp + "ln1.gamma"), params.get(bp + "ln1.beta"));
    x = add(x, attention(params, bp + "attn.", heads, h));
    Var h2 = layernorm_lastdim(x, params.get(bp + "ln2.gamma"), params.get(bp + "ln2.beta"));
    h2 = linear(reshape(h2, {b * k, d}), params.get(bp + "mlp.fc1.weight"),
                params.get(bp + "mlp.fc1.bias"));
    h2 = gelu(h2);
    h2 = linear(h2, params.get(bp + "mlp.fc2.weight"), params.get(bp + "mlp.fc2.bias"));
    x = add(x, reshape(h2, {b, k, d}));
  }
  return layernorm_lastdim(x, params.get(prefix + "norm.gamma"), params.get(prefix + "norm.beta"));
}

Var encoder_forward(const MaeModel& model, const Var& visible_tokens) {
  GEOMAE_CHECK(visible_tokens->val.shape.back() == model.enc.dim,
               "encoder_forward: token dim mismatch");
  return transformer_forward(model.params, "enc.", model.enc.depth, model.enc.heads, visible_tokens);
}

Var decoder_forward(const MaeModel& model, const Var& latent, const MaskPlan& plan,
                    const PosTable3D& dec_pos) {
  GEOMAE_CHECK(latent->val.rank() == 3, "decoder_forward: expected [B,K,D]");
  const Index b = latent->val.shape[0], k = latent->val.shape[1];
  GEOMAE_CHECK(k == plan.keep, "decoder_forward: plan keep count mismatch");
  const Index l = static_cast<Index>(plan.restore.empty() ? 0 : plan.restore[0].size());
  GEOMAE_CHECK(l == dec_pos.dims.tokens(), "decoder_forward: positional table mismatch");
  GEOMAE_CHECK(dec_pos.values.shape[1] == model.dec.dim,
               "decoder_forward: positional dim mismatch");

  Var y = linear(reshape(latent, {b * k, model.enc.dim}), model.params.get("dec.embed.weight"),
                 model.params.get("dec.embed.bias"));
  y = reshape(y, {b, k, model.dec.dim});
  Var full = restore_tokens(y, model.params.get("dec.mask_token"), plan.restore, plan.keep);
  full = add_const_rows(full, dec_pos.values);
  Var z = transformer_forward(model.params, "dec.", model.dec.depth, model.dec.heads, full);
  Var pred = linear(reshape(z, {b * l, model.dec.dim}), model.params.get("dec.pred.weight"),
                    model.params.get("dec.pred.bias"));
  return reshape(pred, {b, l, model.enc.patch_pixels()});
}

Var mae_loss(const Var& pred_pixels, const Tensor& target_pixels,
             const std::vector<std::vector<std::uint8_t>>& mask, bool norm_pix) {
  return masked_token_mse(pred_pixels, target_pixels, mask, norm_pix);
}

namespace {

// Metadata bias terms for a whole batch: rows [B*L, D] for the date term and
// the location term, plus per-row activity masks derived from drop flags.
struct BatchBias {
  Tensor date_rows, loc_rows;
  std::vector<std::uint8_t> date_active, loc_active;
  bool any_date = false, any_loc = false;
};

BatchBias batch_metadata_rows(const ReflectanceBatch& batch, GridDims dims, Index d,
                              const std::vector<DropFlags>& drops) {
  const Index b = batch.batch();
  const Index l = dims.tokens();
  BatchBias bias;
  bias.date_rows = Tensor({b * l, d});
  bias.loc_rows = Tensor({b * l, d});
  bias.date_active.assign(static_cast<std::size_t>(b * l), 0);
  bias.loc_active.assign(static_cast<std::size_t>(b * l), 0);
  const Index frame = dims.gh * dims.gw;
  for (Index bi = 0; bi < b; ++bi) {
    const auto& meta = batch.meta[static_cast<std::size_t>(bi)];
    GEOMAE_CHECK(static_cast<Index>(meta.dates.size()) == dims.t,
                 "metadata date count must equal grid T");
    const DropFlags f = drops[static_cast<std::size_t>(bi)];
    if (!f.drop_time) {
      bias.any_date = true;
      for (Index t = 0; t < dims.t; ++t) {
        const Tensor e = encode_date(meta.dates[static_cast<std::size_t>(t)], d);
        for (Index fi = 0; fi < frame; ++fi) {
          const Index row = bi * l + t * frame + fi;
          bias.date_active[static_cast<std::size_t>(row)] = 1;
          for (Index c = 0; c < d; ++c) bias.date_rows.at(row, c) = e[c];
        }
      }
    }
    if (!f.drop_loc) {
      bias.any_loc = true;
      const Tensor e = encode_location(meta.lat, meta.lon, d);
      for (Index li = 0; li < l; ++li) {
        const Index row = bi * l + li;
        bias.loc_active[static_cast<std::size_t>(row)] = 1;
        for (Index c = 0; c < d; ++c) bias.loc_rows.at(row, c) = e[c];
      }
    }
  }
  return bias;
}

}  // namespace

PretrainOutput pretrain_step(const MaeModel& model, const ReflectanceBatch& batch,
                             const PretrainOptions& opts,
                             std::span<const std::uint64_t> sample_seeds) {
  GEOMAE_CHECK(batch.values.rank() == 5, "pretrain_step: batch must be [B,T,C,H,W]");
  GEOMAE_CHECK(batch.values.shape[2] == model.enc.channels, "pretrain_step: channel count mismatch");
  GEOMAE_CHECK(all_finite(batch.values), "pretrain_step: batch contains non-finite values");
  const Index b = batch.batch();
  GEOMAE_CHECK(static_cast<Index>(sample_seeds.size()) == b,
               "pretrain_step: one seed per sample required");
  GEOMAE_CHECK(batch.meta.empty() || static_cast<Index>(batch.meta.size()) == b,
               "pretrain_step: metadata must be absent or per-sample");

  const GridDims dims = grid_dims_of(batch.values, model.enc.patch);
  const Index l = dims.tokens();
  const Index d = model.enc.dim;

  const Tensor pix = patchify_pixels(batch.values, model.enc.patch);  // [B,L,P]
  Var tokens = embed(batch.values, model.params.get("enc.patch_embed.weight"),
                     model.params.get("enc.patch_embed.bias"), model.enc.patch)
                   .data;

  const PosTable3D enc_pos = sincos_3d(dims, d);
  tokens = add_const_rows(tokens, enc_pos.values);

  PretrainOutput out;
  if (!batch.meta.empty()) {
    out.drops.resize(static_cast<std::size_t>(b));
    for (Index bi = 0; bi < b; ++bi) {
      Rng rng(derive_seed(sample_seeds[static_cast<std::size_t>(bi)], "drop"));
      out.drops[static_cast<std::size_t>(bi)] = sample_drop_flags(opts.drop_prob, rng);
    }
    const BatchBias bias = batch_metadata_rows(batch, dims, d, out.drops);
    if (bias.any_date)
      tokens = add_scaled_const_rows(tokens, model.w_time(), bias.date_rows, bias.date_active);
    if (bias.any_loc)
      tokens = add_scaled_const_rows(tokens, model.w_loc(), bias.loc_rows, bias.loc_active);
  }

  std::vector<std::uint64_t> mask_seeds(static_cast<std::size_t>(b));
  for (Index bi = 0; bi < b; ++bi)
    mask_seeds[static_cast<std::size_t>(bi)] =
        derive_seed(sample_seeds[static_cast<std::size_t>(bi)], "mask");
  out.plan = make_mask_plan(b, l, opts.mask_ratio, mask_seeds);

  Var visible = gather_tokens(tokens, out.plan.kept_indices());
  Var latent = encoder_forward(model, visible);
  const PosTable3D dec_pos = sincos_3d(dims, model.dec.dim);
  out.pred_pixels = decoder_forward(model, latent, out.plan, dec_pos);
  out.loss = mae_loss(out.pred_pixels, pix, out.plan.mask, opts.norm_pix);
  return out;
}

PretrainGrad pretrain_grad(MaeModel& model, const ReflectanceBatch& batch,
                           const PretrainOptions& opts,
                           std::span<const std::uint64_t> sample_seeds) {
  PretrainOutput out = pretrain_step(model, batch, opts, sample_seeds);
  model.params.zero_grads();  // parameters off the current graph must read 0
  backward(out.loss);
  PretrainGrad g;
  g.loss = out.loss->val[0];
  for (const auto& row : out.plan.mask)
    for (std::uint8_t m : row) g.masked_tokens += m ? 1 : 0;
  g.grads = model.params.grads();
  return g;
}

Var encode_unmasked(const MaeModel& model, const ReflectanceBatch& batch, bool use_metadata) {
  GEOMAE_CHECK(batch.values.rank() == 5, "encode_unmasked: batch must be [B,T,C,H,W]");
  GEOMAE_CHECK(batch.values.shape[2] == model.enc.channels, "encode_unmasked: channel count mismatch");
  const Index b = batch.batch();
  const GridDims dims = grid_dims_of(batch.values, model.enc.patch);
  const Index d = model.enc.dim;
  Var tokens = embed(batch.values, model.params.get("enc.patch_embed.weight"),
                     model.params.get("enc.patch_embed.bias"), model.enc.patch)
                   .data;
  tokens = add_const_rows(tokens, sincos_3d(dims, d).values);
  if (use_metadata && !batch.meta.empty()) {
    GEOMAE_CHECK(static_cast<Index>(batch.meta.size()) == b,
                 "encode_unmasked: metadata must be per-sample");
    std::vector<DropFlags> no_drop(static_cast<std::size_t>(b));
    const BatchBias bias = batch_metadata_rows(batch, dims, d, no_drop);
    tokens = add_scaled_const_rows(tokens, model.w_time(), bias.date_rows, bias.date_active);
    tokens = add_scaled_const_rows(tokens, model.w_loc(), bias.loc_rows, bias.loc_active);
  }
  return encoder_forward(model, tokens);
}

}  // namespace geomae

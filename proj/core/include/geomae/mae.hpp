#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geomae/autodiff.hpp"
#include "geomae/patchify.hpp"
#include "geomae/posenc.hpp"

namespace geomae {

struct EncoderConfig {
  Index dim = 64;
  Index depth = 2;
  Index heads = 4;
  double mlp_ratio = 4.0;
  PatchSize patch{1, 16, 16};
  Index channels = 6;

  Index head_dim() const { return dim / heads; }
  Index mlp_hidden() const { return static_cast<Index>(std::llround(mlp_ratio * static_cast<double>(dim))); }
  Index patch_pixels() const { return patch.pixels(channels); }

  /// Named presets: tiny, 300M (ViT-L geometry), 600M (ViT-H geometry).
  static EncoderConfig preset(const std::string& name);
  void validate() const;
};

struct DecoderConfig {
  Index dim = 512;
  Index depth = 8;
  Index heads = 16;
  double mlp_ratio = 4.0;

  Index mlp_hidden() const { return static_cast<Index>(std::llround(mlp_ratio * static_cast<double>(dim))); }
  static DecoderConfig preset(const std::string& name);  // default | tiny
  void validate(Index encoder_dim) const;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  Index numel() const { return numel_of(shape); }
};

/// Insertion-ordered collection of named learnable tensors.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool has(const std::string& name) const { return by_name_.count(name) > 0; }
  const std::vector<std::string>& names() const { return order_; }
  Index total_params() const;
  void zero_grads();

  std::vector<std::pair<std::string, Tensor>> values() const;
  std::map<std::string, Tensor> grads() const;
  void load_values(const std::vector<std::pair<std::string, Tensor>>& arrays);

 private:
  std::vector<std::string> order_;
  std::map<std::string, Var> by_name_;
};

/// Shared initialization convention: truncated normal (sigma 0.02) for
/// weights, ones for norm gains, zeros for biases and norm shifts, 1.0 for
/// the metadata scalars. Seeded per parameter name.
Tensor default_param_init(const ParamSpec& spec, std::uint64_t init_seed);

/// Full parameter layout (names and shapes) of encoder + metadata scalars +
/// decoder. Enumerable without allocating the model.
std::vector<ParamSpec> mae_parameter_specs(const EncoderConfig& enc, const DecoderConfig& dec);
/// Subset with a given name prefix ("enc.", "dec.", "meta.").
Index spec_param_count(const std::vector<ParamSpec>& specs, const std::string& prefix);

struct MaeModel {
  EncoderConfig enc;
  DecoderConfig dec;
  ParamStore params;
  bool norm_pix = false;

  static MaeModel init(const EncoderConfig& enc, const DecoderConfig& dec, std::uint64_t init_seed);

  Var w_time() const { return params.get("meta.w_time"); }
  Var w_loc() const { return params.get("meta.w_loc"); }
};

/// Embedded token sequence [B, L, D] in canonical order
/// l = t * gh * gw + i * gw + j.
struct TokenGrid {
  Var data;
  GridDims dims;
  PatchSize patch;
};

/// Linear patch embedding: [B,T,C,H,W] pixels to [B, L, D] tokens through
/// projection w [D, ph*pw*C] and bias b. Equivalent to a 3D convolution
/// whose stride equals its kernel.
TokenGrid embed(const Tensor& values, const Var& w, const Var& b, PatchSize patch);

/// Pre-norm transformer stack over [B, K, D] tokens, final layer norm.
/// `prefix` selects enc.* or dec.* parameters; depth comes from the config.
Var transformer_forward(const ParamStore& params, const std::string& prefix, Index depth,
                        Index heads, const Var& tokens);

/// Encoder over visible (already position- and metadata-biased) tokens.
Var encoder_forward(const MaeModel& model, const Var& visible_tokens);

/// Decoder: project latent, restore full token order with the learned mask
/// token, add the decoder positional table, run blocks, predict pixel cubes.
Var decoder_forward(const MaeModel& model, const Var& latent, const MaskPlan& plan,
                    const PosTable3D& dec_pos);

/// Mean over masked tokens of per-token mean squared error in pixel space.
Var mae_loss(const Var& pred_pixels, const Tensor& target_pixels,
             const std::vector<std::vector<std::uint8_t>>& mask, bool norm_pix);

struct PretrainOptions {
  double mask_ratio = 0.75;
  double drop_prob = 0.0;
  bool norm_pix = false;
};

struct PretrainOutput {
  Var loss;
  Var pred_pixels;  // [B, L, ph*pw*C]
  MaskPlan plan;
  std::vector<DropFlags> drops;  // one per sample when metadata present
};

/// Full pretraining pipeline: embed, add positional encodings, add metadata
/// bias under sampled drop flags (skipped entirely when metadata is absent),
/// mask, encode, decode, masked-pixel loss. Deterministic given
/// (params, batch, sample_seeds).
PretrainOutput pretrain_step(const MaeModel& model, const ReflectanceBatch& batch,
                             const PretrainOptions& opts,
                             std::span<const std::uint64_t> sample_seeds);

struct PretrainGrad {
  double loss = 0.0;
  Index masked_tokens = 0;
  std::map<std::string, Tensor> grads;
};

/// Pure gradient of the pretraining loss for one batch; shards combine as
/// the masked-token-count weighted mean of their gradients.
PretrainGrad pretrain_grad(MaeModel& model, const ReflectanceBatch& batch,
                           const PretrainOptions& opts,
                           std::span<const std::uint64_t> sample_seeds);

/// Tokens for fine-tuning and embedding export: mask ratio 0, optional
/// metadata bias (never dropped at inference).
Var encode_unmasked(const MaeModel& model, const ReflectanceBatch& batch, bool use_metadata);

}  // namespace geomae

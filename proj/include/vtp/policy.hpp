#pragma once

// The visuo-tactile policy: a CVAE whose encoder maps (proprioception,
// expert action chunk) to a style latent, and whose decoder stack embeds
// camera views, tactile windows and proprioception, fuses vision and touch
// by bidirectional cross-attention, forecasts the next tactile window, and
// emits a multi-frame action chunk conditioned on that forecast. Variants
// switch mechanisms on cumulatively, mirroring the ablation ladder.

#include "vtp/fusion.hpp"
#include "vtp/losses.hpp"
#include "vtp/nn.hpp"

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace vtp::policy {

using ad::Index;
using ad::Tensor;

enum class Variant : int {
  WithoutTouch = 0,
  NaiveTouch = 1,
  CrossAttention = 2,
  NextTouchPred = 3,
  AutoRegressive = 4,
  Full = 5,
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
constexpr std::array<Variant, 6> kVariantLadder = {
    Variant::WithoutTouch,   Variant::NaiveTouch,    Variant::CrossAttention,
    Variant::NextTouchPred,  Variant::AutoRegressive, Variant::Full,
};

inline bool has_tactile_tokens(Variant v) { return v >= Variant::NaiveTouch; }
inline bool has_cross_attention(Variant v) { return v >= Variant::CrossAttention; }
inline bool has_tactile_head(Variant v) { return v >= Variant::NextTouchPred; }
inline bool has_autoregressive(Variant v) { return v >= Variant::AutoRegressive; }
inline bool has_arm_loss(Variant v) { return v >= Variant::Full; }

// Mechanism set enabled by a variant; each ladder step is a strict superset
// of the previous one.
std::set<std::string> variant_mechanisms(Variant v);

enum class Phase { GroundTruthTactile, PredictedTactile };
const char* phase_name(Phase p);

struct ViewSpec {
  Index height = 16;
  Index width = 16;
  Index channels = 1;
  Index patch = 8;

  Index tokens() const { return (height / patch) * (width / patch); }
  Index patch_dim() const { return patch * patch * channels; }
};

struct ModelConfig {
  std::vector<ViewSpec> views = {{16, 16, 1, 4}, {16, 16, 1, 4}};
  std::vector<Index> proprio_groups = {2, 1, 1, 1, 1};
  Index proprio_hist = 6;      // H_p
  Index tactile_channels = 12;  // C; window rows carry [raw | delta], width 2C
  Index tactile_hist = 6;      // H_t
  Index future_horizon = 6;    // H_f
  Index action_horizon = 16;   // H_a

  Index model_dim = 64;
  Index n_heads = 4;
  Index enc_layers = 2;
  Index dec_layers = 2;
  Index latent_dim = 16;
  Variant variant = Variant::Full;
  bool share_fusion = false;

  Index proprio_dim() const;
  Index tactile_input_dim() const { return 2 * tactile_channels; }
  Index visual_tokens() const;
  void validate() const;
};

struct Observation {
  std::vector<Tensor> views;  // flat [H*W*ch] each
  Tensor tactile_window;      // [H_t, 2C]
  Tensor proprio_window;      // [H_p, P]
};

struct TrainSample {
  Observation obs;
  Tensor expert_actions;  // [H_a, P]
  Tensor future_tactile;  // [H_f, 2C]
};

// Window assembly shared by the trainer and the rollout loop. The delta
// half is frame-wise within the window with delta[0] = 0, so the raw rows
// are always recoverable from row 0 plus cumulative deltas.
Tensor build_tactile_window(const std::vector<ad::Array>& raw_frames);

// Patch extraction for one camera view (plain values; gradients never flow
// into pixels). Returns [tokens, patch*patch*channels].
Tensor patchify_view(const Tensor& view_flat, const ViewSpec& spec);

enum class LatentMode { ZeroLatent, SampledLatent };

struct ForwardResult {
  Tensor pred_actions;           // [H_a, P]
  Tensor pred_tactile;           // [H_f, 2C] when the head exists
  bool has_tactile = false;
  Tensor mu, logvar;             // [Z]
};

class PolicyModel {
 public:
  PolicyModel(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  std::pair<Tensor, Tensor> encode_style(const Tensor& expert_actions,
                                         const Tensor& proprio_window) const;
  static Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise);

  struct EmbeddedObs {
    Tensor visual_tokens;   // [Lv, D]
    Tensor tactile_tokens;  // [Lt, D], only when the variant consumes touch
    Tensor proprio_tokens;  // [H_p, D]
    bool has_tactile = false;
  };
  EmbeddedObs embed_observations(const Observation& obs) const;

  Tensor predict_future_tactile(const Tensor& z, const Tensor& proprio_tokens,
                                const Tensor& fused_tokens) const;
  Tensor generate_actions(const Tensor& z, const Tensor& proprio_tokens,
                          const Tensor& obs_tokens,
                          const std::optional<Tensor>& future_tactile) const;

  // Full training-mode pass for one (normalized) sample. noise drives the
  // reparameterization; phase selects ground-truth vs predicted tactile
  // conditioning for autoregressive variants.
  ForwardResult forward_sample(const TrainSample& sample, Phase phase, const Tensor& noise) const;

  // Deterministic inference: no style encoder, z zero or seeded Gaussian,
  // predicted tactile feeds the action head for every variant with the head.
  Tensor infer(const Observation& obs, LatentMode mode, uint64_t seed = 0) const;
  ForwardResult infer_full(const Observation& obs, LatentMode mode, uint64_t seed = 0) const;

  // Memory token count seen by the action head (ablation monotonicity).
  Index action_memory_tokens() const;

 private:
  Tensor observation_tokens(const EmbeddedObs& emb, int site) const;
  Tensor run_decoder(const std::vector<nn::DecoderBlock>& blocks,
                     const nn::LayerNormParams& final_ln, const Tensor& queries,
                     const Tensor& memory) const;

  ModelConfig cfg_;
  nn::AttentionConfig attn_;
  nn::ParamStore store_;
  nn::PositionalEncoding pe_;

  // style encoder
  Tensor cls_token_;
  nn::Linear enc_action_proj_, enc_proprio_proj_;
  std::vector<nn::EncoderBlock> enc_blocks_;
  nn::LayerNormParams enc_final_ln_;
  nn::Linear mu_head_, logvar_head_;

  // observation embedding
  std::vector<nn::Linear> view_projs_;
  nn::Linear tactile_proj_, proprio_proj_;

  // fusion sites (1: tactile head, 2: action head)
  fusion::FusionParams fuse_site1_, fuse_site2_;

  // tactile forecasting head
  std::vector<nn::DecoderBlock> tactile_dec_;
  nn::LayerNormParams tactile_final_ln_;
  nn::Linear tactile_out_;

  // action head
  nn::Linear z_proj_, future_proj_;
  std::vector<nn::DecoderBlock> action_dec_;
  nn::LayerNormParams action_final_ln_;
  nn::Linear action_out_;
};

// Linear cross-fade between the previous chunk's remaining frames and a new
// chunk over blend_horizon frames: out[k] = (1-k/B)*prev[k] + (k/B)*new[k]
// for k < B, new[k] elsewhere. blend_horizon 0 returns the new chunk.
Tensor temporal_smooth(const Tensor& prev_tail, const Tensor& new_chunk, Index blend_horizon);

}  // namespace vtp::policy

#include "vtp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vtp::policy {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::WithoutTouch: return "without_touch";
    case Variant::NaiveTouch: return "naive_touch";
    case Variant::CrossAttention: return "cross_attention";
    case Variant::NextTouchPred: return "next_touch_pred";
    case Variant::AutoRegressive: return "autoregressive";
    case Variant::Full: return "full";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : kVariantLadder) {
    if (name == variant_name(v)) return v;
  }
  throw std::invalid_argument("unknown policy variant: " + name);
}

std::set<std::string> variant_mechanisms(Variant v) {
  std::set<std::string> m = {"visual_tokens", "proprio_tokens", "style_latent"};
  if (has_tactile_tokens(v)) m.insert("tactile_tokens");
  if (has_cross_attention(v)) m.insert("cross_attention_fusion");
  if (has_tactile_head(v)) m.insert("tactile_forecast_head");
  if (has_autoregressive(v)) m.insert("autoregressive_feedback");
  if (has_arm_loss(v)) m.insert("arm_auxiliary_loss");
  return m;
}

const char* phase_name(Phase p) {
  return p == Phase::GroundTruthTactile ? "ground_truth_tactile" : "predicted_tactile";
}

Index ModelConfig::proprio_dim() const {
  Index n = 0;
  for (Index g : proprio_groups) n += g;
  return n;
}

Index ModelConfig::visual_tokens() const {
  Index n = 0;
  for (const ViewSpec& v : views) n += v.tokens();
  return n;
}

void ModelConfig::validate() const {
  if (views.empty()) throw ad::ShapeError("config: at least one camera view required");
  for (const ViewSpec& v : views) {
    if (v.height <= 0 || v.width <= 0 || v.channels <= 0 || v.patch <= 0) {
      throw ad::ShapeError("config: view dims must be positive");
    }
    if (v.height % v.patch != 0 || v.width % v.patch != 0) {
      throw ad::ShapeError("config: view " + std::to_string(v.height) + "x" +
                           std::to_string(v.width) + " not divisible by patch " +
                           std::to_string(v.patch));
    }
  }
  if (proprio_groups.size() < 2 || proprio_groups[0] < 2) {
    throw ad::ShapeError("config: proprio groups need [arm>=2, hand, ...] structure");
  }
  for (Index g : proprio_groups) {
    if (g < 1) throw ad::ShapeError("config: proprio group extents must be positive");
  }
  if (proprio_hist < 1 || tactile_channels < 1 || tactile_hist < 1 || future_horizon < 1 ||
      action_horizon < 1 || latent_dim < 1 || enc_layers < 1 || dec_layers < 1) {
    throw ad::ShapeError("config: horizons and dims must be positive");
  }
  nn::AttentionConfig{model_dim, n_heads}.validate();
}

Tensor build_tactile_window(const std::vector<ad::Array>& raw_frames) {
  if (raw_frames.empty()) throw ad::ShapeError("tactile window: no frames");
  Index rows = static_cast<Index>(raw_frames.size());
  Index c = raw_frames[0].size();
  ad::Array out(rows * 2 * c);
  for (Index r = 0; r < rows; ++r) {
    if (raw_frames[static_cast<size_t>(r)].size() != c) {
      throw ad::ShapeError("tactile window: inconsistent channel counts");
    }
    out.segment(r * 2 * c, c) = raw_frames[static_cast<size_t>(r)];
    if (r == 0) {
      out.segment(c, c).setZero();
    } else {
      out.segment(r * 2 * c + c, c) =
          raw_frames[static_cast<size_t>(r)] - raw_frames[static_cast<size_t>(r - 1)];
    }
  }
  return Tensor::from_array({rows, 2 * c}, std::move(out));
}

Tensor patchify_view(const Tensor& view_flat, const ViewSpec& spec) {
  if (view_flat.numel() != spec.height * spec.width * spec.channels) {
    throw ad::ShapeError("patchify: view has " + std::to_string(view_flat.numel()) +
                         " values, spec wants " +
                         std::to_string(spec.height * spec.width * spec.channels));
  }
  Index ph = spec.height / spec.patch, pw = spec.width / spec.patch;
  Index pd = spec.patch_dim();
  ad::Array out(ph * pw * pd);
  const ad::Array& src = view_flat.values();
  for (Index pr = 0; pr < ph; ++pr) {
    for (Index pc = 0; pc < pw; ++pc) {
      Index tok = pr * pw + pc;
      for (Index dh = 0; dh < spec.patch; ++dh) {
        for (Index dw = 0; dw < spec.patch; ++dw) {
          for (Index ch = 0; ch < spec.channels; ++ch) {
            Index r = pr * spec.patch + dh, col = pc * spec.patch + dw;
            out(tok * pd + ((dh * spec.patch) + dw) * spec.channels + ch) =
                src(((r * spec.width) + col) * spec.channels + ch);
          }
        }
      }
    }
  }
  return Tensor::from_array({ph * pw, pd}, std::move(out));
}

namespace {

Index pe_table_length(const ModelConfig& cfg) {
  Index longest = 1 + cfg.proprio_hist + cfg.action_horizon;  // style encoder sequence
  longest = std::max(longest, cfg.tactile_hist);
  longest = std::max(longest, cfg.future_horizon);
  longest = std::max(longest, cfg.action_horizon);
  for (const ViewSpec& v : cfg.views) longest = std::max(longest, v.tokens());
  return longest;
}

}  // namespace

PolicyModel::PolicyModel(ModelConfig cfg, uint64_t init_seed)
    : cfg_(std::move(cfg)), attn_{cfg_.model_dim, cfg_.n_heads} {
  cfg_.validate();
  pe_ = nn::PositionalEncoding(pe_table_length(cfg_), cfg_.model_dim);

  Index d = cfg_.model_dim;
  Index p = cfg_.proprio_dim();

  cls_token_ = store_.make("style_enc.cls", {1, d});
  enc_action_proj_ = nn::Linear(store_, "style_enc.action_proj", p, d, false);
  enc_proprio_proj_ = nn::Linear(store_, "style_enc.proprio_proj", p, d, false);
  for (Index i = 0; i < cfg_.enc_layers; ++i) {
    enc_blocks_.emplace_back(store_, "style_enc.block" + std::to_string(i), attn_);
  }
  enc_final_ln_ = nn::LayerNormParams(store_, "style_enc.final_ln", d);
  mu_head_ = nn::Linear(store_, "style_enc.mu", d, cfg_.latent_dim, false);
  logvar_head_ = nn::Linear(store_, "style_enc.logvar", d, cfg_.latent_dim, false);

  for (size_t v = 0; v < cfg_.views.size(); ++v) {
    view_projs_.emplace_back(store_, "embed.view" + std::to_string(v),
                             cfg_.views[v].patch_dim(), d, false);
  }
  proprio_proj_ = nn::Linear(store_, "embed.proprio", p, d, false);
  if (has_tactile_tokens(cfg_.variant)) {
    tactile_proj_ = nn::Linear(store_, "embed.tactile", cfg_.tactile_input_dim(), d, false);
  }

  if (has_cross_attention(cfg_.variant)) {
    fuse_site2_ = fusion::FusionParams(store_, "fusion.action_site", attn_);
    if (has_tactile_head(cfg_.variant)) {
      fuse_site1_ = cfg_.share_fusion
                        ? fuse_site2_
                        : fusion::FusionParams(store_, "fusion.tactile_site", attn_);
    }
  }

  z_proj_ = nn::Linear(store_, "decoder.z_proj", cfg_.latent_dim, d);
  if (has_tactile_head(cfg_.variant)) {
    for (Index i = 0; i < cfg_.dec_layers; ++i) {
      tactile_dec_.emplace_back(store_, "tactile_head.block" + std::to_string(i), attn_);
    }
    tactile_final_ln_ = nn::LayerNormParams(store_, "tactile_head.final_ln", d);
    tactile_out_ = nn::Linear(store_, "tactile_head.out", d, cfg_.tactile_input_dim());
    future_proj_ = nn::Linear(store_, "decoder.future_proj", cfg_.tactile_input_dim(), d, false);
  }
  for (Index i = 0; i < cfg_.dec_layers; ++i) {
    action_dec_.emplace_back(store_, "action_head.block" + std::to_string(i), attn_);
  }
  action_final_ln_ = nn::LayerNormParams(store_, "action_head.final_ln", d);
  action_out_ = nn::Linear(store_, "action_head.out", d, p);

  store_.init_uniform_fanin(init_seed);
}

std::pair<Tensor, Tensor> PolicyModel::encode_style(const Tensor& expert_actions,
                                                    const Tensor& proprio_window) const {
  if (expert_actions.rank() != 2 || expert_actions.shape()[0] != cfg_.action_horizon ||
      expert_actions.shape()[1] != cfg_.proprio_dim()) {
    throw ad::ShapeError("encode_style: action chunk must be [" +
                         std::to_string(cfg_.action_horizon) + "," +
                         std::to_string(cfg_.proprio_dim()) + "], got " +
                         ad::shape_str(expert_actions.shape()));
  }
  if (proprio_window.rank() != 2 || proprio_window.shape()[0] != cfg_.proprio_hist ||
      proprio_window.shape()[1] != cfg_.proprio_dim()) {
    throw ad::ShapeError("encode_style: proprio window must be [" +
                         std::to_string(cfg_.proprio_hist) + "," +
                         std::to_string(cfg_.proprio_dim()) + "], got " +
                         ad::shape_str(proprio_window.shape()));
  }
  Tensor seq = ad::concat(0, {cls_token_, enc_proprio_proj_.forward(proprio_window),
                              enc_action_proj_.forward(expert_actions)});
  seq = pe_.add_to(seq);
  for (const nn::EncoderBlock& block : enc_blocks_) seq = block.forward(seq, attn_);
  seq = enc_final_ln_.forward(seq);
  Tensor cls_out = ad::slice(seq, 0, 0, 1);
  Tensor mu = ad::reshape(mu_head_.forward(cls_out), {cfg_.latent_dim});
  Tensor logvar = ad::reshape(logvar_head_.forward(cls_out), {cfg_.latent_dim});
  return {mu, logvar};
}

Tensor PolicyModel::reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
  if (mu.shape() != logvar.shape() || mu.shape() != noise.shape()) {
    throw ad::ShapeError("reparameterize: mu/logvar/noise shapes must match");
  }
  return ad::add(mu, ad::mul(ad::exp(ad::mul(logvar, 0.5)), noise));
}

PolicyModel::EmbeddedObs PolicyModel::embed_observations(const Observation& obs) const {
  if (obs.views.size() != cfg_.views.size()) {
    throw ad::ShapeError("observation: expected " + std::to_string(cfg_.views.size()) +
                         " views, got " + std::to_string(obs.views.size()));
  }
  EmbeddedObs out;
  std::vector<Tensor> view_tokens;
  for (size_t v = 0; v < obs.views.size(); ++v) {
    Tensor patches = patchify_view(obs.views[v], cfg_.views[v]);
    view_tokens.push_back(pe_.add_to(view_projs_[v].forward(patches)));
  }
  out.visual_tokens = view_tokens.size() == 1 ? view_tokens[0] : ad::concat(0, view_tokens);

  if (obs.proprio_window.rank() != 2 || obs.proprio_window.shape()[0] != cfg_.proprio_hist ||
      obs.proprio_window.shape()[1] != cfg_.proprio_dim()) {
    throw ad::ShapeError("observation: proprio window must be [" +
                         std::to_string(cfg_.proprio_hist) + "," +
                         std::to_string(cfg_.proprio_dim()) + "], got " +
                         ad::shape_str(obs.proprio_window.shape()));
  }
  out.proprio_tokens = pe_.add_to(proprio_proj_.forward(obs.proprio_window));

  if (has_tactile_tokens(cfg_.variant)) {
    if (obs.tactile_window.rank() != 2 || obs.tactile_window.shape()[0] != cfg_.tactile_hist ||
        obs.tactile_window.shape()[1] != cfg_.tactile_input_dim()) {
      throw ad::ShapeError("observation: tactile window must be [" +
                           std::to_string(cfg_.tactile_hist) + "," +
                           std::to_string(cfg_.tactile_input_dim()) + "], got " +
                           ad::shape_str(obs.tactile_window.shape()));
    }
    out.tactile_tokens = pe_.add_to(tactile_proj_.forward(obs.tactile_window));
    out.has_tactile = true;
  }
  return out;
}

Tensor PolicyModel::observation_tokens(const EmbeddedObs& emb, int site) const {
  if (!has_tactile_tokens(cfg_.variant)) return emb.visual_tokens;
  fusion::ModalityTokens tokens{emb.visual_tokens, emb.tactile_tokens};
  if (!has_cross_attention(cfg_.variant)) return fusion::naive_token_fuse(tokens);
  const fusion::FusionParams& p = site == 1 ? fuse_site1_ : fuse_site2_;
  return fusion::cross_modal_fuse(tokens, p, attn_);
}

Tensor PolicyModel::run_decoder(const std::vector<nn::DecoderBlock>& blocks,
                                const nn::LayerNormParams& final_ln, const Tensor& queries,
                                const Tensor& memory) const {
  Tensor x = queries;
  for (const nn::DecoderBlock& block : blocks) x = block.forward(x, memory, attn_);
  return final_ln.forward(x);
}

Tensor PolicyModel::predict_future_tactile(const Tensor& z, const Tensor& proprio_tokens,
                                           const Tensor& fused_tokens) const {
  if (!has_tactile_head(cfg_.variant)) {
    throw std::invalid_argument("variant " + std::string(variant_name(cfg_.variant)) +
                                " has no tactile forecasting head");
  }
  Tensor z_token = z_proj_.forward(ad::reshape(z, {1, cfg_.latent_dim}));
  Tensor memory = ad::concat(0, {z_token, proprio_tokens, fused_tokens});
  Tensor queries = pe_.row_block(cfg_.future_horizon);
  Tensor decoded = run_decoder(tactile_dec_, tactile_final_ln_, queries, memory);
  return tactile_out_.forward(decoded);
}

Tensor PolicyModel::generate_actions(const Tensor& z, const Tensor& proprio_tokens,
                                     const Tensor& obs_tokens,
                                     const std::optional<Tensor>& future_tactile) const {
  Tensor z_token = z_proj_.forward(ad::reshape(z, {1, cfg_.latent_dim}));
  std::vector<Tensor> memory_parts = {z_token, proprio_tokens, obs_tokens};
  if (has_tactile_head(cfg_.variant)) {
    if (!future_tactile.has_value()) {
      throw std::invalid_argument("variant " + std::string(variant_name(cfg_.variant)) +
                                  " conditions on future tactile tokens");
    }
    memory_parts.push_back(pe_.add_to(future_proj_.forward(*future_tactile)));
  } else if (future_tactile.has_value()) {
    throw std::invalid_argument("variant " + std::string(variant_name(cfg_.variant)) +
                                " does not condition on future tactile");
  }
  Tensor memory = ad::concat(0, memory_parts);
  Tensor queries = pe_.row_block(cfg_.action_horizon);
  Tensor decoded = run_decoder(action_dec_, action_final_ln_, queries, memory);
  return action_out_.forward(decoded);
}

ForwardResult PolicyModel::forward_sample(const TrainSample& sample, Phase phase,
                                          const Tensor& noise) const {
  if (phase == Phase::PredictedTactile && !has_tactile_head(cfg_.variant)) {
    throw std::invalid_argument("phase predicted_tactile is incompatible with variant " +
                                std::string(variant_name(cfg_.variant)) +
                                " (no tactile forecasting head)");
  }
  ForwardResult out;
  auto [mu, logvar] = encode_style(sample.expert_actions, sample.obs.proprio_window);
  out.mu = mu;
  out.logvar = logvar;
  Tensor z = reparameterize(mu, logvar, noise);

  EmbeddedObs emb = embed_observations(sample.obs);
  std::optional<Tensor> future;
  if (has_tactile_head(cfg_.variant)) {
    out.pred_tactile = predict_future_tactile(z, emb.proprio_tokens, observation_tokens(emb, 1));
    out.has_tactile = true;
    // NextTouchPred trains the head but always conditions actions on ground
    // truth; autoregressive variants follow the curriculum phase.
    bool feed_prediction = has_autoregressive(cfg_.variant) && phase == Phase::PredictedTactile;
    future = feed_prediction ? out.pred_tactile : sample.future_tactile;
  }
  out.pred_actions = generate_actions(z, emb.proprio_tokens, observation_tokens(emb, 2), future);
  return out;
}

ForwardResult PolicyModel::infer_full(const Observation& obs, LatentMode mode,
                                      uint64_t seed) const {
  Tensor z = Tensor::zeros({cfg_.latent_dim});
  if (mode == LatentMode::SampledLatent) {
    rng::Stream rs(seed);
    auto& v = z.mutable_values();
    for (Index i = 0; i < v.size(); ++i) v(i) = rs.normal();
  }
  ForwardResult out;
  EmbeddedObs emb = embed_observations(obs);
  std::optional<Tensor> future;
  if (has_tactile_head(cfg_.variant)) {
    out.pred_tactile = predict_future_tactile(z, emb.proprio_tokens, observation_tokens(emb, 1));
    out.has_tactile = true;
    future = out.pred_tactile;
  }
  out.pred_actions = generate_actions(z, emb.proprio_tokens, observation_tokens(emb, 2), future);
  return out;
}

Tensor PolicyModel::infer(const Observation& obs, LatentMode mode, uint64_t seed) const {
  return infer_full(obs, mode, seed).pred_actions;
}

Index PolicyModel::action_memory_tokens() const {
  Index n = 1 + cfg_.proprio_hist + cfg_.visual_tokens();
  if (has_tactile_tokens(cfg_.variant)) n += cfg_.tactile_hist;
  if (has_tactile_head(cfg_.variant)) n += cfg_.future_horizon;
  return n;
}

Tensor temporal_smooth(const Tensor& prev_tail, const Tensor& new_chunk, Index blend_horizon) {
  if (new_chunk.rank() != 2 || prev_tail.rank() != 2 ||
      prev_tail.shape()[1] != new_chunk.shape()[1]) {
    throw ad::ShapeError("temporal_smooth: chunks must be [frames, dims] with equal dims");
  }
  if (blend_horizon < 0 || blend_horizon > new_chunk.shape()[0]) {
    throw ad::ShapeError("temporal_smooth: blend horizon " + std::to_string(blend_horizon) +
                         " exceeds chunk length " + std::to_string(new_chunk.shape()[0]));
  }
  if (blend_horizon > prev_tail.shape()[0]) {
    throw ad::ShapeError("temporal_smooth: blend horizon " + std::to_string(blend_horizon) +
                         " exceeds previous tail length " + std::to_string(prev_tail.shape()[0]));
  }
  ad::Array out = new_chunk.values();
  Index dims = new_chunk.shape()[1];
  for (Index k = 0; k < blend_horizon; ++k) {
    double w = static_cast<double>(k) / static_cast<double>(blend_horizon);
    auto prev = prev_tail.values().segment(k * dims, dims);
    // lerp form keeps identical chunks bit-identical
    out.segment(k * dims, dims) = prev + w * (out.segment(k * dims, dims) - prev);
  }
  return Tensor::from_array(new_chunk.shape(), std::move(out));
}

}  // namespace vtp::policy

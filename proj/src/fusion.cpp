#include "vtp/fusion.hpp"

namespace vtp::fusion {

void ModalityTokens::validate(Index model_dim) const {
  if (visual.rank() != 2 || tactile.rank() != 2) {
    throw ad::ShapeError("fusion: token matrices must be rank 2");
  }
  if (visual.shape()[0] < 1 || tactile.shape()[0] < 1) {
    throw ad::ShapeError("fusion: each modality needs at least one token");
  }
  if (visual.shape()[1] != model_dim || tactile.shape()[1] != model_dim) {
    throw ad::ShapeError("fusion: model_dim mismatch, visual " + ad::shape_str(visual.shape()) +
                         " tactile " + ad::shape_str(tactile.shape()));
  }
}

FusionParams::FusionParams(nn::ParamStore& store, const std::string& prefix,
                           const nn::AttentionConfig& cfg)
    : tactile_reads_visual(store, prefix + ".t2v", cfg),
      visual_reads_tactile(store, prefix + ".v2t", cfg) {}

Tensor cross_modal_fuse(const ModalityTokens& m, const FusionParams& p,
                        const nn::AttentionConfig& cfg) {
  m.validate(cfg.model_dim);
  Tensor tactile_attended = nn::multi_head_attention(m.tactile, m.visual, p.tactile_reads_visual, cfg);
  Tensor visual_attended = nn::multi_head_attention(m.visual, m.tactile, p.visual_reads_tactile, cfg);
  return ad::concat(0, {visual_attended, tactile_attended});
}

Tensor naive_token_fuse(const ModalityTokens& m) {
  if (m.visual.rank() != 2 || m.tactile.rank() != 2 ||
      m.visual.shape()[1] != m.tactile.shape()[1]) {
    throw ad::ShapeError("naive fuse: incompatible token matrices");
  }
  return ad::concat(0, {m.visual, m.tactile});
}

}  // namespace vtp::fusion

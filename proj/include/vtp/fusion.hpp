#pragma once

// Bidirectional cross-attention between visual and tactile token streams.
// Keys/values come from one modality while the other supplies queries, in
// both directions; the two attended streams are concatenated along the
// token axis. naive_token_fuse is the plain-concatenation baseline.

#include "vtp/nn.hpp"

namespace vtp::fusion {

using ad::Index;
using ad::Tensor;

struct ModalityTokens {
  Tensor visual;   // [Lv, D]
  Tensor tactile;  // [Lt, D]

  void validate(Index model_dim) const;
};

struct FusionParams {
  nn::MhaParams tactile_reads_visual;  // queries tactile, kv visual
  nn::MhaParams visual_reads_tactile;  // queries visual, kv tactile

  FusionParams() = default;
  FusionParams(nn::ParamStore& store, const std::string& prefix, const nn::AttentionConfig& cfg);
};

// Returns [Lv+Lt, D]: visual-attended rows first, then tactile-attended rows.
Tensor cross_modal_fuse(const ModalityTokens& m, const FusionParams& p,
                        const nn::AttentionConfig& cfg);

// Plain concatenation, [Lv+Lt, D], visual rows first.
Tensor naive_token_fuse(const ModalityTokens& m);

}  // namespace vtp::fusion

#pragma once

// Transformer building blocks on top of the autodiff core: linear layers,
// multi-head attention, pre-norm encoder/decoder blocks, sinusoidal
// positional encodings, and a named parameter store shared by the
// optimizer and the checkpoint format.

#include "vtp/rng.hpp"
#include "vtp/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace vtp::nn {

using ad::Index;
using ad::Tensor;

// Ordered name -> parameter map. Insertion through make() keeps a stable
// iteration order (lexicographic) so optimizer state and checkpoints line up.
class ParamStore {
 public:
  Tensor make(const std::string& name, ad::Shape shape);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Tensor>& entries() { return params_; }
  const std::map<std::string, Tensor>& entries() const { return params_; }

  Index total_size() const;
  void zero_grads();

  // Scaled-uniform fan-in init, U(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases
  // and norm offsets zero, norm gains one. Deterministic given seed.
  void init_uniform_fanin(uint64_t seed);
  void fill_zero();

 private:
  std::map<std::string, Tensor> params_;
};

struct AttentionConfig {
  Index model_dim = 64;
  Index n_heads = 4;

  Index head_dim() const { return model_dim / n_heads; }
  void validate() const;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Index in_dim, Index out_dim,
         bool with_bias = true);

  // x: [L, in] -> [L, out]
  Tensor forward(const Tensor& x) const;

  Index in_dim() const { return weight.shape()[1]; }
  Index out_dim() const { return weight.shape()[0]; }

  Tensor weight;  // [out, in]
  Tensor bias;    // [out], empty handle when bias-free
  bool has_bias = false;
};

// Sinusoidal table, rows alternate sin/cos by column parity.
class PositionalEncoding {
 public:
  PositionalEncoding() = default;
  PositionalEncoding(Index max_len, Index model_dim);

  // tokens + table[0:L] (not recorded on the tape; the table is constant)
  Tensor add_to(const Tensor& tokens) const;
  Tensor row_block(Index len) const;  // [len, model_dim] constant tensor

  const Tensor& table() const { return table_; }

 private:
  Tensor table_;
};

struct MhaParams {
  Linear wq, wk, wv, wo;

  MhaParams() = default;
  MhaParams(ParamStore& store, const std::string& prefix, const AttentionConfig& cfg);
};

// Scaled dot-product attention, heads concatenated then projected.
// q_src: [Lq, D], kv_src: [Lk, D] -> [Lq, D]. Self-attention is q==kv.
Tensor multi_head_attention(const Tensor& q_src, const Tensor& kv_src, const MhaParams& p,
                            const AttentionConfig& cfg);

// Attention weight matrices per head (row-stochastic), for tests/inspection.
std::vector<Tensor> attention_weights(const Tensor& q_src, const Tensor& kv_src,
                                      const MhaParams& p, const AttentionConfig& cfg);

struct LayerNormParams {
  Tensor gain, bias;
  double eps = 1e-5;

  LayerNormParams() = default;
  LayerNormParams(ParamStore& store, const std::string& prefix, Index dim);
  Tensor forward(const Tensor& x) const { return ad::layer_norm(x, gain, bias, eps); }
};

struct FeedForwardParams {
  Linear in, out;  // D -> 4D -> D, gelu between

  FeedForwardParams() = default;
  FeedForwardParams(ParamStore& store, const std::string& prefix, Index dim);
  Tensor forward(const Tensor& x) const;
};

// Pre-norm residual encoder block: x + MHA(LN(x)); then x + FFN(LN(x)).
struct EncoderBlock {
  MhaParams attn;
  LayerNormParams ln_attn, ln_ffn;
  FeedForwardParams ffn;

  EncoderBlock() = default;
  EncoderBlock(ParamStore& store, const std::string& prefix, const AttentionConfig& cfg);
  Tensor forward(const Tensor& tokens, const AttentionConfig& cfg) const;
};

// Finite-difference check against live parameters: loss_fn recomputes the
// objective from whatever the parameters currently hold. One backward pass
// supplies the analytic gradients; each named coordinate is then perturbed
// in place for the central difference. Must run with no tape active.
double params_finite_diff_check(const std::function<ad::Tensor()>& loss_fn, ParamStore& store,
                                const std::vector<std::pair<std::string, Index>>& coords,
                                double eps = 1e-5);

// Pre-norm residual decoder block: self-attention over queries, then
// cross-attention to memory (queries normed, memory used as-is), then FFN.
struct DecoderBlock {
  MhaParams self_attn, cross_attn;
  LayerNormParams ln_self, ln_cross, ln_ffn;
  FeedForwardParams ffn;

  DecoderBlock() = default;
  DecoderBlock(ParamStore& store, const std::string& prefix, const AttentionConfig& cfg);
  Tensor forward(const Tensor& queries, const Tensor& memory, const AttentionConfig& cfg) const;
};

}  // namespace vtp::nn

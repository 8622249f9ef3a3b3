#include "vtp/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vtp::nn {

Tensor ParamStore::make(const std::string& name, ad::Shape shape) {
  if (params_.count(name) > 0) throw std::invalid_argument("duplicate parameter: " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  params_.emplace(name, t);
  return t;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Index ParamStore::total_size() const {
  Index n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParamStore::init_uniform_fanin(uint64_t seed) {
  for (auto& [name, t] : params_) {
    bool is_vector_param = t.rank() == 1;
    if (is_vector_param) {
      // biases and norm offsets start at zero, norm gains at one
      bool is_gain = name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
      t.mutable_values().setConstant(is_gain ? 1.0 : 0.0);
      continue;
    }
    Index fan_in = t.shape()[t.rank() - 1];
    double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    rng::Stream rs(rng::mix_seed(seed, rng::fnv1a64(name)));
    auto& v = t.mutable_values();
    for (Index i = 0; i < v.size(); ++i) v(i) = rs.uniform(-bound, bound);
  }
}

void ParamStore::fill_zero() {
  for (auto& [name, t] : params_) t.mutable_values().setZero();
}

void AttentionConfig::validate() const {
  if (model_dim <= 0 || n_heads <= 0) throw ad::ShapeError("attention: dims must be positive");
  if (model_dim % n_heads != 0) {
    throw ad::ShapeError("attention: model_dim " + std::to_string(model_dim) +
                         " not divisible by heads " + std::to_string(n_heads));
  }
}

Linear::Linear(ParamStore& store, const std::string& name, Index in_dim, Index out_dim,
               bool with_bias)
    : has_bias(with_bias) {
  weight = store.make(name + ".weight", {out_dim, in_dim});
  if (with_bias) bias = store.make(name + ".bias", {out_dim});
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = ad::matmul(x, ad::transpose2(weight));
  if (has_bias) y = ad::add_rows(y, bias);
  return y;
}

PositionalEncoding::PositionalEncoding(Index max_len, Index model_dim) {
  ad::Array v(max_len * model_dim);
  for (Index pos = 0; pos < max_len; ++pos) {
    for (Index i = 0; i < model_dim; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(model_dim));
      double angle = static_cast<double>(pos) * rate;
      v(pos * model_dim + i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  table_ = Tensor::from_array({max_len, model_dim}, std::move(v), false);
}

Tensor PositionalEncoding::row_block(Index len) const {
  if (len > table_.shape()[0]) {
    throw ad::ShapeError("positional encoding: length " + std::to_string(len) +
                         " exceeds table " + std::to_string(table_.shape()[0]));
  }
  return ad::slice(table_, 0, 0, len);
}

Tensor PositionalEncoding::add_to(const Tensor& tokens) const {
  return ad::add(tokens, row_block(tokens.shape()[0]));
}

MhaParams::MhaParams(ParamStore& store, const std::string& prefix, const AttentionConfig& cfg)
    : wq(store, prefix + ".wq", cfg.model_dim, cfg.model_dim),
      wk(store, prefix + ".wk", cfg.model_dim, cfg.model_dim),
      wv(store, prefix + ".wv", cfg.model_dim, cfg.model_dim),
      wo(store, prefix + ".wo", cfg.model_dim, cfg.model_dim) {}

namespace {

Tensor head_slice(const Tensor& t, Index head, Index head_dim) {
  return ad::slice(t, 1, head * head_dim, (head + 1) * head_dim);
}

}  // namespace

Tensor multi_head_attention(const Tensor& q_src, const Tensor& kv_src, const MhaParams& p,
                            const AttentionConfig& cfg) {
  cfg.validate();
  if (q_src.rank() != 2 || kv_src.rank() != 2 || q_src.shape()[1] != cfg.model_dim ||
      kv_src.shape()[1] != cfg.model_dim) {
    throw ad::ShapeError("attention: token matrices must be [L," +
                         std::to_string(cfg.model_dim) + "], got " + ad::shape_str(q_src.shape()) +
                         " and " + ad::shape_str(kv_src.shape()));
  }
  Tensor q = p.wq.forward(q_src);
  Tensor k = p.wk.forward(kv_src);
  Tensor v = p.wv.forward(kv_src);

  double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(cfg.n_heads));
  for (Index h = 0; h < cfg.n_heads; ++h) {
    Tensor qh = head_slice(q, h, cfg.head_dim());
    Tensor kh = head_slice(k, h, cfg.head_dim());
    Tensor vh = head_slice(v, h, cfg.head_dim());
    Tensor scores = ad::mul(ad::matmul(qh, ad::transpose2(kh)), scale);
    Tensor weights = ad::softmax(scores, 1);
    heads.push_back(ad::matmul(weights, vh));
  }
  return p.wo.forward(ad::concat(1, heads));
}

std::vector<Tensor> attention_weights(const Tensor& q_src, const Tensor& kv_src,
                                      const MhaParams& p, const AttentionConfig& cfg) {
  cfg.validate();
  Tensor q = p.wq.forward(q_src);
  Tensor k = p.wk.forward(kv_src);
  double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  std::vector<Tensor> out;
  for (Index h = 0; h < cfg.n_heads; ++h) {
    Tensor qh = head_slice(q, h, cfg.head_dim());
    Tensor kh = head_slice(k, h, cfg.head_dim());
    out.push_back(ad::softmax(ad::mul(ad::matmul(qh, ad::transpose2(kh)), scale), 1));
  }
  return out;
}

double params_finite_diff_check(const std::function<ad::Tensor()>& loss_fn, ParamStore& store,
                                const std::vector<std::pair<std::string, Index>>& coords,
                                double eps) {
  store.zero_grads();
  {
    ad::Tape tape;
    ad::Tensor loss = loss_fn();
    tape.backward(loss);
  }
  double worst = 0.0;
  for (const auto& [name, coord] : coords) {
    Tensor& param = store.at(name);
    double analytic = param.has_grad() ? param.grad()(coord) : 0.0;
    double saved = param.mutable_values()(coord);
    param.mutable_values()(coord) = saved + eps;
    double fp = loss_fn().value();
    param.mutable_values()(coord) = saved - eps;
    double fm = loss_fn().value();
    param.mutable_values()(coord) = saved;
    double fd = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)));
  }
  return worst;
}

LayerNormParams::LayerNormParams(ParamStore& store, const std::string& prefix, Index dim) {
  gain = store.make(prefix + ".gain", {dim});
  bias = store.make(prefix + ".bias", {dim});
}

FeedForwardParams::FeedForwardParams(ParamStore& store, const std::string& prefix, Index dim)
    : in(store, prefix + ".in", dim, 4 * dim), out(store, prefix + ".out", 4 * dim, dim) {}

Tensor FeedForwardParams::forward(const Tensor& x) const {
  return out.forward(ad::gelu(in.forward(x)));
}

EncoderBlock::EncoderBlock(ParamStore& store, const std::string& prefix,
                           const AttentionConfig& cfg)
    : attn(store, prefix + ".attn", cfg),
      ln_attn(store, prefix + ".ln_attn", cfg.model_dim),
      ln_ffn(store, prefix + ".ln_ffn", cfg.model_dim),
      ffn(store, prefix + ".ffn", cfg.model_dim) {}

Tensor EncoderBlock::forward(const Tensor& tokens, const AttentionConfig& cfg) const {
  Tensor normed = ln_attn.forward(tokens);
  Tensor x = ad::add(tokens, multi_head_attention(normed, normed, attn, cfg));
  return ad::add(x, ffn.forward(ln_ffn.forward(x)));
}

DecoderBlock::DecoderBlock(ParamStore& store, const std::string& prefix,
                           const AttentionConfig& cfg)
    : self_attn(store, prefix + ".self", cfg),
      cross_attn(store, prefix + ".cross", cfg),
      ln_self(store, prefix + ".ln_self", cfg.model_dim),
      ln_cross(store, prefix + ".ln_cross", cfg.model_dim),
      ln_ffn(store, prefix + ".ln_ffn", cfg.model_dim),
      ffn(store, prefix + ".ffn", cfg.model_dim) {}

Tensor DecoderBlock::forward(const Tensor& queries, const Tensor& memory,
                             const AttentionConfig& cfg) const {
  Tensor normed = ln_self.forward(queries);
  Tensor x = ad::add(queries, multi_head_attention(normed, normed, self_attn, cfg));
  x = ad::add(x, multi_head_attention(ln_cross.forward(x), memory, cross_attn, cfg));
  return ad::add(x, ffn.forward(ln_ffn.forward(x)));
}

}  // namespace vtp::nn

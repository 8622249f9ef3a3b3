#include "doctest.h"

#include "vtp/nn.hpp"
#include "vtp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

using namespace vtp;
using ad::Tensor;

namespace {

Tensor random_tokens(ad::Index rows, ad::Index cols, uint64_t seed) {
  rng::Stream rs(seed);
  Tensor t = Tensor::zeros({rows, cols});
  auto& v = t.mutable_values();
  for (ad::Index i = 0; i < v.size(); ++i) v(i) = rs.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("attention config validates divisibility") {
  CHECK_THROWS_AS((nn::AttentionConfig{10, 4}.validate()), ad::ShapeError);
  CHECK_NOTHROW((nn::AttentionConfig{16, 4}.validate()));
}

TEST_CASE("positional encoding alternates sin and cos by column parity") {
  nn::PositionalEncoding pe(12, 8);
  const Tensor& table = pe.table();
  for (int pos = 0; pos < 12; ++pos) {
    CHECK(table.at(pos * 8 + 0) == doctest::Approx(std::sin(pos)).epsilon(1e-12));
    CHECK(table.at(pos * 8 + 1) == doctest::Approx(std::cos(pos)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(pe.row_block(13), ad::ShapeError);
}

TEST_CASE("single-key attention collapses to an affine map of that token") {
  nn::ParamStore store;
  nn::AttentionConfig cfg{16, 2};
  nn::MhaParams mha(store, "mha", cfg);
  store.init_uniform_fanin(5);
  Tensor q = random_tokens(4, 16, 1);
  Tensor kv = random_tokens(1, 16, 2);
  Tensor out = nn::multi_head_attention(q, kv, mha, cfg);
  CHECK(out.shape() == ad::Shape{4, 16});
  // every output row equals the same function of the single kv token
  for (int r = 1; r < 4; ++r) {
    for (int c = 0; c < 16; ++c) {
      CHECK(out.at(r * 16 + c) == doctest::Approx(out.at(c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention weights are row-stochastic") {
  nn::ParamStore store;
  nn::AttentionConfig cfg{16, 4};
  nn::MhaParams mha(store, "mha", cfg);
  store.init_uniform_fanin(6);
  Tensor q = random_tokens(5, 16, 3);
  Tensor kv = random_tokens(7, 16, 4);
  for (const Tensor& w : nn::attention_weights(q, kv, mha, cfg)) {
    CHECK(w.shape() == ad::Shape{5, 7});
    for (int r = 0; r < 5; ++r) {
      CHECK(std::abs(w.values().segment(r * 7, 7).sum() - 1.0) <= 1e-12);
    }
    CHECK((w.values() >= 0.0).all());
  }
}

TEST_CASE("attention output is invariant to kv token permutation") {
  nn::ParamStore store;
  nn::AttentionConfig cfg{8, 2};
  nn::MhaParams mha(store, "mha", cfg);
  store.init_uniform_fanin(7);
  Tensor q = random_tokens(3, 8, 8);
  Tensor kv = random_tokens(5, 8, 9);
  Tensor out = nn::multi_head_attention(q, kv, mha, cfg);

  // reverse the kv rows
  Tensor kv_perm = Tensor::zeros({5, 8});
  for (int r = 0; r < 5; ++r) {
    kv_perm.mutable_values().segment((4 - r) * 8, 8) = kv.values().segment(r * 8, 8);
  }
  Tensor out_perm = nn::multi_head_attention(q, kv_perm, mha, cfg);
  CHECK((out.values() - out_perm.values()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder block preserves shape and is identity at zero weights") {
  nn::ParamStore store;
  nn::AttentionConfig cfg{16, 2};
  nn::EncoderBlock block(store, "enc", cfg);

  store.fill_zero();
  Tensor tokens = random_tokens(5, 16, 10);
  Tensor out = block.forward(tokens, cfg);
  CHECK(out.shape() == tokens.shape());
  CHECK((out.values() == tokens.values()).all());

  store.init_uniform_fanin(11);
  Tensor out2 = block.forward(tokens, cfg);
  CHECK(out2.shape() == tokens.shape());
  CHECK((out2.values() != tokens.values()).any());
}

TEST_CASE("two stacked encoder blocks pass the finite-difference oracle") {
  nn::ParamStore store;
  nn::AttentionConfig cfg{8, 2};
  nn::EncoderBlock b1(store, "b1", cfg);
  nn::EncoderBlock b2(store, "b2", cfg);
  store.init_uniform_fanin(12);
  Tensor tokens = random_tokens(4, 8, 13);

  auto loss = [&]() {
    return ad::mean(ad::square(b2.forward(b1.forward(tokens, cfg), cfg)));
  };
  std::vector<std::pair<std::string, ad::Index>> coords;
  rng::Stream rs(14);
  std::vector<std::string> names;
  for (const auto& [name, t] : store.entries()) names.push_back(name);
  for (int i = 0; i < 24; ++i) {
    const std::string& name = names[rs.below(names.size())];
    coords.emplace_back(name, static_cast<ad::Index>(rs.below(
                                  static_cast<uint64_t>(store.at(name).numel()))));
  }
  CHECK(nn::params_finite_diff_check(loss, store, coords) < 1e-4);
}

TEST_CASE("decoder block shape, zero-weight identity, duplicated memory") {
  nn::ParamStore store;
  nn::AttentionConfig cfg{16, 2};
  nn::DecoderBlock block(store, "dec", cfg);
  Tensor queries = random_tokens(3, 16, 15);
  Tensor memory = random_tokens(6, 16, 16);

  store.fill_zero();
  Tensor out = block.forward(queries, memory, cfg);
  CHECK(out.shape() == ad::Shape{3, 16});
  CHECK((out.values() == queries.values()).all());

  store.init_uniform_fanin(17);
  Tensor fresh = block.forward(queries, memory, cfg);
  CHECK(fresh.shape() == ad::Shape{3, 16});

  // duplicating every memory token halves each softmax weight but leaves
  // the value average unchanged
  Tensor doubled = ad::concat(0, {memory, memory});
  Tensor out_doubled = block.forward(queries, doubled, cfg);
  CHECK((fresh.values() - out_doubled.values()).abs().maxCoeff() < 1e-9);
}

TEST_CASE("decoder block gradient passes the finite-difference oracle") {
  nn::ParamStore store;
  nn::AttentionConfig cfg{8, 2};
  nn::DecoderBlock block(store, "dec", cfg);
  store.init_uniform_fanin(18);
  Tensor queries = random_tokens(3, 8, 19);
  Tensor memory = random_tokens(4, 8, 20);
  auto loss = [&]() { return ad::mean(ad::square(block.forward(queries, memory, cfg))); };
  std::vector<std::pair<std::string, ad::Index>> coords;
  rng::Stream rs(21);
  for (const auto& [name, t] : store.entries()) {
    coords.emplace_back(name, static_cast<ad::Index>(rs.below(static_cast<uint64_t>(t.numel()))));
  }
  CHECK(nn::params_finite_diff_check(loss, store, coords) < 1e-4);
}

TEST_CASE("fan-in initialization is deterministic and scaled") {
  auto build = [](uint64_t seed) {
    auto store = std::make_unique<nn::ParamStore>();
    nn::Linear lin(*store, "lin", 16, 16);
    nn::LayerNormParams ln(*store, "ln", 16);
    store->init_uniform_fanin(seed);
    return store;
  };
  auto s1 = build(123), s2 = build(123), s3 = build(124);
  CHECK((s1->at("lin.weight").values() == s2->at("lin.weight").values()).all());
  CHECK((s1->at("lin.weight").values() != s3->at("lin.weight").values()).any());

  CHECK((s1->at("lin.bias").values() == 0.0).all());
  CHECK((s1->at("ln.bias").values() == 0.0).all());
  CHECK((s1->at("ln.gain").values() == 1.0).all());

  double bound = std::sqrt(1.0 / 16.0);
  CHECK(s1->at("lin.weight").values().abs().maxCoeff() <= bound);

  // sample mean of a 256-element layer: uniform(-b,b) has sigma = b/sqrt(3)
  double mean = s1->at("lin.weight").values().mean();
  double sigma = bound / std::sqrt(3.0);
  CHECK(std::abs(mean) <= 3.0 * sigma / std::sqrt(256.0));
}

TEST_CASE("linear layer applies weight then bias") {
  nn::ParamStore store;
  nn::Linear lin(store, "lin", 3, 2);
  lin.weight.mutable_values() << 1, 0, 0, 0, 1, 0;  // rows of [out,in]
  lin.bias.mutable_values() << 10, 20;
  Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor y = lin.forward(x);
  CHECK(y.shape() == ad::Shape{2, 2});
  CHECK(y.at(0) == 11.0);
  CHECK(y.at(1) == 22.0);
  CHECK(y.at(2) == 14.0);
  CHECK(y.at(3) == 25.0);
}

#include "doctest.h"

#include "vtp/checkpoint.hpp"
#include "vtp/policy.hpp"
#include "vtp/rng.hpp"
#include "vtp/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace vtp;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

policy::ModelConfig micro_config(policy::Variant v = policy::Variant::Full) {
  policy::ModelConfig cfg;
  cfg.views = {{8, 8, 1, 4}};
  cfg.proprio_groups = {2, 1, 1, 1, 1};
  cfg.proprio_hist = 2;
  cfg.tactile_channels = 4;
  cfg.tactile_hist = 3;
  cfg.future_horizon = 2;
  cfg.action_horizon = 4;
  cfg.model_dim = 8;
  cfg.n_heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.latent_dim = 4;
  cfg.variant = v;
  return cfg;
}

Tensor random_tensor(ad::Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  rng::Stream rs(seed);
  Tensor t = Tensor::zeros(shape);
  for (ad::Index i = 0; i < t.numel(); ++i) t.mutable_values()(i) = rs.uniform(lo, hi);
  return t;
}

policy::TrainSample random_sample(const policy::ModelConfig& cfg, uint64_t seed) {
  policy::TrainSample s;
  rng::Stream rs(seed);
  for (const policy::ViewSpec& v : cfg.views) {
    s.obs.views.push_back(random_tensor({v.height * v.width * v.channels}, rs.next_u64(), 0, 1));
  }
  s.obs.tactile_window =
      random_tensor({cfg.tactile_hist, cfg.tactile_input_dim()}, rs.next_u64());
  s.obs.proprio_window = random_tensor({cfg.proprio_hist, cfg.proprio_dim()}, rs.next_u64());
  s.expert_actions = random_tensor({cfg.action_horizon, cfg.proprio_dim()}, rs.next_u64());
  s.future_tactile =
      random_tensor({cfg.future_horizon, cfg.tactile_input_dim()}, rs.next_u64());
  return s;
}

train::NormalizationStats unit_stats(const policy::ModelConfig& cfg) {
  train::NormalizationStats stats;
  stats.proprio = {ad::Array::Zero(cfg.proprio_dim()), ad::Array::Ones(cfg.proprio_dim())};
  stats.action = {ad::Array::Zero(cfg.proprio_dim()), ad::Array::Ones(cfg.proprio_dim())};
  stats.tactile_raw = {ad::Array::Zero(cfg.tactile_channels),
                       ad::Array::Ones(cfg.tactile_channels)};
  stats.tactile_delta = {ad::Array::Zero(cfg.tactile_channels),
                         ad::Array::Ones(cfg.tactile_channels)};
  return stats;
}

}  // namespace

TEST_CASE("style encoder produces latent-sized outputs, zero at zero weights") {
  policy::PolicyModel model(micro_config(), 3);
  policy::TrainSample s = random_sample(model.config(), 4);
  auto [mu, logvar] = model.encode_style(s.expert_actions, s.obs.proprio_window);
  CHECK(mu.shape() == ad::Shape{4});
  CHECK(logvar.shape() == ad::Shape{4});

  model.params().fill_zero();
  auto [mu0, lv0] = model.encode_style(s.expert_actions, s.obs.proprio_window);
  CHECK((mu0.values() == 0.0).all());
  CHECK((lv0.values() == 0.0).all());

  CHECK_THROWS_AS(model.encode_style(s.obs.proprio_window, s.obs.proprio_window),
                  ad::ShapeError);
}

TEST_CASE("reparameterization") {
  Tensor mu = random_tensor({4}, 5);
  Tensor logvar = random_tensor({4}, 6);
  Tensor zero = Tensor::zeros({4});

  Tensor z1 = policy::PolicyModel::reparameterize(mu, logvar, zero);
  CHECK((z1.values() == mu.values()).all());

  Tensor n = random_tensor({4}, 7);
  Tensor z2 = policy::PolicyModel::reparameterize(Tensor::zeros({4}), Tensor::zeros({4}), n);
  CHECK((z2.values() == n.values()).all());

  // d z / d logvar = 0.5 * exp(logvar/2) * noise
  double err = ad::finite_diff_check(
      [&](const Tensor& lv) {
        return ad::sum(policy::PolicyModel::reparameterize(mu, lv, n));
      },
      logvar);
  CHECK(err < 1e-6);
}

TEST_CASE("observation embedding token counts and the zero-image case") {
  policy::ModelConfig cfg = micro_config();
  cfg.views = {{16, 16, 1, 8}, {16, 16, 1, 8}};
  policy::PolicyModel model(cfg, 8);
  policy::TrainSample s = random_sample(cfg, 9);
  s.obs.views = {random_tensor({256}, 1, 0, 1), random_tensor({256}, 2, 0, 1)};
  auto emb = model.embed_observations(s.obs);
  CHECK(emb.visual_tokens.shape() == ad::Shape{8, 8});  // 2 views x 4 patches
  CHECK(emb.tactile_tokens.shape() == ad::Shape{3, 8});
  CHECK(emb.proprio_tokens.shape() == ad::Shape{2, 8});

  // zero images: bias-free projection leaves exactly the positional encoding
  s.obs.views = {Tensor::zeros({256}), Tensor::zeros({256})};
  auto emb0 = model.embed_observations(s.obs);
  nn::PositionalEncoding pe(4, 8);
  for (int view = 0; view < 2; ++view) {
    for (int tok = 0; tok < 4; ++tok) {
      for (int d = 0; d < 8; ++d) {
        CHECK(emb0.visual_tokens.at((view * 4 + tok) * 8 + d) ==
              doctest::Approx(pe.table().at(tok * 8 + d)).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("patchify rejects resolutions not divisible by the patch size") {
  policy::ModelConfig cfg = micro_config();
  cfg.views = {{9, 8, 1, 4}};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("not divisible"), ad::ShapeError);
}

TEST_CASE("tactile head shape and zero-weight prediction") {
  policy::PolicyModel model(micro_config(), 10);
  policy::TrainSample s = random_sample(model.config(), 11);
  policy::ForwardResult fwd =
      model.forward_sample(s, policy::Phase::GroundTruthTactile, Tensor::zeros({4}));
  CHECK(fwd.has_tactile);
  CHECK(fwd.pred_tactile.shape() == ad::Shape{2, 8});
  CHECK(fwd.pred_actions.shape() == ad::Shape{4, 6});

  model.params().fill_zero();
  policy::ForwardResult zero =
      model.forward_sample(s, policy::Phase::GroundTruthTactile, Tensor::zeros({4}));
  CHECK((zero.pred_tactile.values() == 0.0).all());
}

TEST_CASE("action generation is deterministic and sensitive to the tactile slot") {
  policy::PolicyModel model(micro_config(), 12);
  policy::TrainSample s = random_sample(model.config(), 13);
  Tensor noise = random_tensor({4}, 14);

  policy::ForwardResult a = model.forward_sample(s, policy::Phase::GroundTruthTactile, noise);
  policy::ForwardResult b = model.forward_sample(s, policy::Phase::GroundTruthTactile, noise);
  CHECK((a.pred_actions.values() == b.pred_actions.values()).all());

  // predicted-tactile conditioning changes the memory tokens, so a random
  // model's output moves too
  policy::ForwardResult c = model.forward_sample(s, policy::Phase::PredictedTactile, noise);
  CHECK((a.pred_actions.values() != c.pred_actions.values()).any());
}

TEST_CASE("phase 2 is rejected for variants lacking the tactile head") {
  policy::PolicyModel model(micro_config(policy::Variant::CrossAttention), 15);
  policy::TrainSample s = random_sample(model.config(), 16);
  CHECK_THROWS_AS(model.forward_sample(s, policy::Phase::PredictedTactile, Tensor::zeros({4})),
                  std::invalid_argument);
  // NextTouchPred has the head: phase 2 still conditions on ground truth
  policy::PolicyModel ntp(micro_config(policy::Variant::NextTouchPred), 15);
  CHECK_NOTHROW(ntp.forward_sample(s, policy::Phase::PredictedTactile, Tensor::zeros({4})));
}

TEST_CASE("variant ladder mechanisms strictly grow and memory tokens are monotone") {
  std::set<std::string> prev;
  ad::Index prev_tokens = -1;
  for (policy::Variant v : policy::kVariantLadder) {
    std::set<std::string> m = policy::variant_mechanisms(v);
    if (!prev.empty()) {
      CHECK(m.size() == prev.size() + 1);
      CHECK(std::includes(m.begin(), m.end(), prev.begin(), prev.end()));
    }
    policy::PolicyModel model(micro_config(v), 17);
    ad::Index tokens = model.action_memory_tokens();
    CHECK(tokens >= prev_tokens);
    prev_tokens = tokens;
    prev = m;
  }
  // tactile tokens and the forecast slot add strictly
  policy::PolicyModel wo(micro_config(policy::Variant::WithoutTouch), 17);
  policy::PolicyModel nt(micro_config(policy::Variant::NaiveTouch), 17);
  policy::PolicyModel np(micro_config(policy::Variant::NextTouchPred), 17);
  CHECK(nt.action_memory_tokens() == wo.action_memory_tokens() + 3);
  CHECK(np.action_memory_tokens() == nt.action_memory_tokens() + 2);
}

TEST_CASE("without-touch variant ignores tactile input entirely") {
  policy::PolicyModel model(micro_config(policy::Variant::WithoutTouch), 18);
  policy::TrainSample s = random_sample(model.config(), 19);
  policy::ForwardResult a =
      model.forward_sample(s, policy::Phase::GroundTruthTactile, Tensor::zeros({4}));
  CHECK(!a.has_tactile);
  policy::TrainSample s2 = s;
  s2.obs.tactile_window = random_tensor({3, 8}, 20);
  policy::ForwardResult b =
      model.forward_sample(s2, policy::Phase::GroundTruthTactile, Tensor::zeros({4}));
  CHECK((a.pred_actions.values() == b.pred_actions.values()).all());
}

TEST_CASE("inference determinism and latent sensitivity") {
  policy::PolicyModel model(micro_config(), 21);
  policy::TrainSample s = random_sample(model.config(), 22);

  Tensor c1 = model.infer(s.obs, policy::LatentMode::ZeroLatent);
  Tensor c2 = model.infer(s.obs, policy::LatentMode::ZeroLatent);
  CHECK((c1.values() == c2.values()).all());
  CHECK(c1.shape() == ad::Shape{4, 6});

  Tensor s1 = model.infer(s.obs, policy::LatentMode::SampledLatent, 1);
  Tensor s2 = model.infer(s.obs, policy::LatentMode::SampledLatent, 2);
  CHECK((s1.values() - s2.values()).abs().sum() > 0.0);
}

TEST_CASE("tactile window reconstruction from row zero plus cumulative deltas") {
  std::vector<ad::Array> frames;
  rng::Stream rs(23);
  for (int t = 0; t < 5; ++t) {
    ad::Array f(3);
    for (int c = 0; c < 3; ++c) f(c) = rs.uniform(-1, 1);
    frames.push_back(f);
  }
  Tensor window = policy::build_tactile_window(frames);
  CHECK(window.shape() == ad::Shape{5, 6});
  ad::Array recon = window.values().segment(0, 3);
  CHECK((window.values().segment(3, 3) == 0.0).all());
  for (int t = 0; t < 5; ++t) {
    if (t > 0) recon += window.values().segment(t * 6 + 3, 3);
    ad::Array raw = window.values().segment(t * 6, 3);
    CHECK((recon - raw).abs().maxCoeff() == 0.0);
    CHECK((raw == frames[static_cast<size_t>(t)]).all());
  }
}

TEST_CASE("temporal smoothing") {
  Tensor prev = random_tensor({4, 3}, 24);
  Tensor fresh = random_tensor({4, 3}, 25);

  Tensor pass = policy::temporal_smooth(prev, fresh, 0);
  CHECK((pass.values() == fresh.values()).all());

  Tensor same = policy::temporal_smooth(prev, prev, 3);
  CHECK((same.values() == prev.values()).all());

  ad::Index blend = 4;
  Tensor blended = policy::temporal_smooth(prev, fresh, blend);
  for (ad::Index k = 0; k < blend; ++k) {
    double w = static_cast<double>(k) / static_cast<double>(blend);
    for (int c = 0; c < 3; ++c) {
      double expect = (1 - w) * prev.at(k * 3 + c) + w * fresh.at(k * 3 + c);
      CHECK(blended.at(k * 3 + c) == doctest::Approx(expect).epsilon(1e-15));
    }
  }
  CHECK_THROWS_AS(policy::temporal_smooth(prev, fresh, 5), ad::ShapeError);
}

TEST_CASE("forward losses are deterministic given params, inputs and noise") {
  policy::PolicyModel model(micro_config(), 26);
  policy::TrainSample s = random_sample(model.config(), 27);
  Tensor noise = random_tensor({4}, 28);
  train::NormalizationStats stats = unit_stats(model.config());
  train::LossWeights w;
  auto run = [&]() {
    policy::ForwardResult fwd =
        model.forward_sample(s, policy::Phase::GroundTruthTactile, noise);
    return train::sample_losses(model, fwd, s, w, stats).total_value();
  };
  CHECK(run() == run());
}

TEST_CASE("perfect predictions zero the JA, tactile and arm losses") {
  policy::PolicyModel model(micro_config(), 29);
  policy::TrainSample s = random_sample(model.config(), 30);
  train::NormalizationStats stats = unit_stats(model.config());
  policy::ForwardResult fwd;
  fwd.pred_actions = s.expert_actions;
  fwd.pred_tactile = s.future_tactile;
  fwd.has_tactile = true;
  fwd.mu = Tensor::zeros({4});
  fwd.logvar = Tensor::zeros({4});
  train::LossWeights w;
  train::LossBundle bundle = train::sample_losses(model, fwd, s, w, stats);
  CHECK(bundle.ja_value() == 0.0);
  CHECK(bundle.tactile_value() == 0.0);
  CHECK(bundle.arm_value() == 0.0);
  CHECK(bundle.kl_value() == 0.0);
  CHECK(bundle.total_value() == 0.0);
}

TEST_CASE("micro end-to-end composite loss passes finite differences") {
  policy::PolicyModel model(micro_config(), 31);
  policy::TrainSample s = random_sample(model.config(), 32);
  Tensor noise = random_tensor({4}, 33);
  train::NormalizationStats stats = unit_stats(model.config());
  train::LossWeights w;
  auto loss = [&]() {
    policy::ForwardResult fwd = model.forward_sample(s, policy::Phase::PredictedTactile, noise);
    return train::sample_losses(model, fwd, s, w, stats).total;
  };
  std::vector<std::pair<std::string, ad::Index>> coords;
  rng::Stream rs(34);
  std::vector<std::string> names;
  for (const auto& [name, t] : model.params().entries()) names.push_back(name);
  for (int i = 0; i < 20; ++i) {
    const std::string& name = names[rs.below(names.size())];
    coords.emplace_back(
        name, static_cast<ad::Index>(rs.below(
                  static_cast<uint64_t>(model.params().at(name).numel()))));
  }
  CHECK(nn::params_finite_diff_check(loss, model.params(), coords) < 1e-3);
}

TEST_CASE("fusion sites share weights only when configured to") {
  policy::ModelConfig shared_cfg = micro_config();
  shared_cfg.share_fusion = true;
  policy::PolicyModel shared(shared_cfg, 40);
  CHECK(!shared.params().contains("fusion.tactile_site.t2v.wq.weight"));
  CHECK(shared.params().contains("fusion.action_site.t2v.wq.weight"));

  policy::PolicyModel unshared(micro_config(), 40);
  CHECK(unshared.params().contains("fusion.tactile_site.t2v.wq.weight"));
  CHECK(unshared.params().contains("fusion.action_site.t2v.wq.weight"));
}

TEST_CASE("fusion requires at least one token per modality") {
  nn::ParamStore store;
  nn::AttentionConfig cfg{8, 2};
  fusion::FusionParams params(store, "fuse", cfg);
  fusion::ModalityTokens empty_tactile{Tensor::zeros({3, 8}), Tensor::zeros({0, 8})};
  CHECK_THROWS_AS(fusion::cross_modal_fuse(empty_tactile, params, cfg), ad::ShapeError);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject shape drift") {
  fs::path dir = fs::temp_directory_path() / "vtp_ckpt_test";
  fs::create_directories(dir);
  policy::PolicyModel model(micro_config(), 35);
  std::map<std::string, ad::Array> extras = {{"norm.demo", ad::Array::Constant(3, 1.25)}};
  fs::path path = dir / "model.vtck";
  policy::save_checkpoint(path, model.params(), extras, 0xAA, 0xBB);

  policy::Checkpoint ckpt = policy::load_checkpoint(path);
  CHECK(ckpt.config_digest == 0xAA);
  CHECK(ckpt.model_digest == 0xBB);
  CHECK(ckpt.blobs.count("norm.demo") == 1);

  policy::PolicyModel other(micro_config(), 36);
  CHECK((other.params().at("action_head.out.weight").values() !=
         model.params().at("action_head.out.weight").values())
            .any());
  policy::restore_params(other.params(), ckpt);
  for (const auto& [name, t] : model.params().entries()) {
    CHECK((other.params().at(name).values() == t.values()).all());
  }

  // magic corruption is a typed error
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("ZZ", 2);
  }
  CHECK_THROWS_AS(policy::load_checkpoint(path), synth::IoError);

  // a model missing one of its parameters in the blob set must refuse
  policy::save_checkpoint(path, model.params(), {}, 1, 2);
  policy::Checkpoint ok = policy::load_checkpoint(path);
  policy::PolicyModel smaller(micro_config(policy::Variant::WithoutTouch), 37);
  CHECK_NOTHROW(policy::restore_params(smaller.params(), ok));  // subset restores fine
  policy::PolicyModel bigger(micro_config(policy::Variant::Full), 38);
  policy::Checkpoint missing;
  missing.blobs = ok.blobs;
  missing.blobs.erase("tactile_head.out.weight");
  CHECK_THROWS_WITH_AS(policy::restore_params(bigger.params(), missing),
                       doctest::Contains("tactile_head.out.weight"), synth::IoError);
}

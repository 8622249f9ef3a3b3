#include "doctest.h"

#include "vtp/config.hpp"

#include <set>

using namespace vtp;

TEST_CASE("defaults load and expose the desk-scale dims") {
  config::RunConfig cfg = config::RunConfig::defaults();
  policy::ModelConfig mc = cfg.model_config();
  CHECK(mc.visual_tokens() == 32);  // two 16x16 views at patch 4
  CHECK(mc.proprio_dim() == 6);
  CHECK(mc.tactile_input_dim() == 24);
  CHECK(mc.action_horizon == 16);
  CHECK(mc.variant == policy::Variant::Full);
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_WITH_AS(config::RunConfig::from_string("model.dimension=3\n"),
                       doctest::Contains("unknown config key"), config::ConfigError);
  CHECK_THROWS_AS(config::RunConfig::from_string("modeldim\n"), config::ConfigError);
}

TEST_CASE("digest is stable under key reordering and comments") {
  config::RunConfig a = config::RunConfig::from_string("model.dim=32\ntrain.epochs=7\n");
  config::RunConfig b =
      config::RunConfig::from_string("# reordered\ntrain.epochs=7\nmodel.dim=32\n");
  CHECK(a.digest() == b.digest());

  config::RunConfig c = config::RunConfig::from_string("model.dim=16\ntrain.epochs=7\n");
  CHECK(a.digest() != c.digest());
}

TEST_CASE("model digest ignores training knobs but tracks structure") {
  config::RunConfig a = config::RunConfig::from_string("train.epochs=3\n");
  config::RunConfig b = config::RunConfig::from_string("train.epochs=99\n");
  CHECK(a.model_digest() == b.model_digest());
  CHECK(a.digest() != b.digest());

  config::RunConfig c = config::RunConfig::from_string("model.dim=32\n");
  CHECK(a.model_digest() != c.model_digest());
}

TEST_CASE("paper scale pins the published shapes") {
  config::RunConfig cfg = config::RunConfig::from_string("scale=paper\n");
  policy::ModelConfig mc = cfg.model_config();
  CHECK(mc.proprio_dim() == 50);
  CHECK(mc.proprio_groups == std::vector<ad::Index>{7, 17, 7, 17, 2});
  CHECK(mc.proprio_hist == 6);
  CHECK(mc.tactile_channels == 60);
  CHECK(mc.tactile_input_dim() == 120);
  CHECK(mc.tactile_hist == 18);
  CHECK(mc.action_horizon == 100);
  CHECK(mc.views.size() == 4);
  // paper training defaults follow the published recipe
  CHECK(cfg.train_options().batch_size == 128);
  CHECK(cfg.train_options().lr == doctest::Approx(1e-4));

  // any deviating paper-scale shape fails construction
  CHECK_THROWS_WITH_AS(config::RunConfig::from_string("scale=paper\nact.horizon=90\n"),
                       doctest::Contains("paper scale fixes"), config::ConfigError);
  CHECK_THROWS_AS(config::RunConfig::from_string("scale=paper\nobs.tactile_hist=16\n"),
                  config::ConfigError);
}

TEST_CASE("infeasible worlds are rejected at load time") {
  CHECK_THROWS_WITH_AS(
      config::RunConfig::from_string("world.quantization=0.05\nworld.tolerance=0.05\n"),
      doctest::Contains("tolerance < quantization/2"), ad::DomainError);
}

TEST_CASE("every registry key carries documentation") {
  std::set<std::string> seen;
  for (const config::KeyDoc& kd : config::RunConfig::registry()) {
    CHECK(!kd.doc.empty());
    CHECK(seen.insert(kd.key).second);
  }
}

TEST_CASE("seed override rewrites the three seed keys") {
  config::RunConfig cfg = config::RunConfig::defaults();
  cfg.override_seed(7);
  CHECK(cfg.get("data.seed") == "7");
  CHECK(cfg.get("train.seed") == "7");
  CHECK(cfg.get("eval.seed") == "1007");
}

TEST_CASE("typed getters validate their input") {
  config::RunConfig cfg = config::RunConfig::defaults();
  CHECK(cfg.get_bool("model.share_fusion") == false);
  CHECK_THROWS_AS(config::RunConfig::from_string("model.share_fusion=maybe\n").get_bool(
                      "model.share_fusion"),
                  config::ConfigError);
  CHECK_THROWS_AS(config::RunConfig::from_string("model.dim=abc\n"), config::ConfigError);
}

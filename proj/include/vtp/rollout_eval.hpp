#pragma once

// Closed-loop evaluation: every replan_every steps the policy plans a fresh
// action chunk from the live observation history, the new chunk is
// cross-faded into the old one, and frames are executed until the next
// replan. Stage scores for the synthetic task come from measurable events
// (coarse-region approach, final distance bands) so the metric pipeline is
// exercised end to end without human judges.

#include "vtp/normalization.hpp"
#include "vtp/policy.hpp"
#include "vtp/synthworld.hpp"

#include <deque>
#include <memory>
#include <vector>

namespace vtp::eval {

using ad::Index;

struct RolloutConfig {
  Index horizon = 80;
  Index replan_every = 2;
  Index blend_horizon = 1;
};

// Raw observation history the planner may look at (newest last).
struct RecentFrames {
  std::deque<ad::Array> tactile;
  std::deque<ad::Array> proprio;
  std::vector<ad::Array> views;  // current frame only
};

class ChunkPolicy {
 public:
  virtual ~ChunkPolicy() = default;
  // Returns a raw action chunk [H_a, P]. `world` grants privileged access
  // for scripted baselines; learned policies must only read `recent`.
  virtual ad::Tensor plan(const synth::World& world, const RecentFrames& recent) = 0;
  virtual Index chunk_len() const = 0;
};

// Wraps the scripted demonstrator: simulates a copy of the environment
// forward to emit a whole chunk.
class ExpertChunkPolicy : public ChunkPolicy {
 public:
  ExpertChunkPolicy(Index horizon, Index proprio_dim) : horizon_(horizon), dim_(proprio_dim) {}
  ad::Tensor plan(const synth::World& world, const RecentFrames& recent) override;
  Index chunk_len() const override { return horizon_; }

 private:
  Index horizon_, dim_;
};

// Normalizes observations with the training stats, runs the model, and
// denormalizes the produced chunk.
class ModelChunkPolicy : public ChunkPolicy {
 public:
  ModelChunkPolicy(const policy::PolicyModel& model, train::NormalizationStats stats,
                   policy::LatentMode mode = policy::LatentMode::ZeroLatent, uint64_t seed = 0);
  ad::Tensor plan(const synth::World& world, const RecentFrames& recent) override;
  Index chunk_len() const override { return model_.config().action_horizon; }

 private:
  const policy::PolicyModel& model_;
  train::NormalizationStats stats_;
  policy::LatentMode mode_;
  uint64_t seed_;
};

// Emits uniform random actions; the floor the ablation table stands on.
class RandomChunkPolicy : public ChunkPolicy {
 public:
  RandomChunkPolicy(Index horizon, Index proprio_dim, double scale, uint64_t seed)
      : horizon_(horizon), dim_(proprio_dim), scale_(scale), stream_(seed) {}
  ad::Tensor plan(const synth::World& world, const RecentFrames& recent) override;
  Index chunk_len() const override { return horizon_; }

 private:
  Index horizon_, dim_;
  double scale_;
  rng::Stream stream_;
};

struct RolloutResult {
  bool success = false;
  synth::TaskPhase final_phase = synth::TaskPhase::Approach;
  double final_distance = 0.0;
  double min_coarse_distance = 0.0;  // closest approach to the visual cell center
  Index steps = 0;
};

RolloutResult rollout(ChunkPolicy& pol, const synth::WorldConfig& wcfg,
                      const synth::ObsGeometry& geom, const Eigen::Vector2d& start,
                      const Eigen::Vector2d& target, const RolloutConfig& rcfg,
                      Index tactile_hist, Index proprio_hist, uint64_t noise_seed = 0);

// Environment draws for evaluation run `index` under `seed` (same placement
// scheme as the generator, disjoint seed stream).
struct EvalEnv {
  Eigen::Vector2d start, target;
};
EvalEnv eval_env(const synth::WorldConfig& wcfg, uint64_t seed, Index index);

// Measurable-event scoring bands for the synthetic insertion task.
struct ScoreBands {
  double align_radius = 0.125;
  double tolerance = 0.05;
};

// Stage 1 (approach) from the closest coarse-region distance; stage 2
// (insert) from completion and final distance. A flawless run maps to
// all-3 scores.
std::vector<double> score_rollout(const RolloutResult& r, const ScoreBands& bands);

}  // namespace vtp::eval

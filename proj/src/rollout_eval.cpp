#include "vtp/rollout_eval.hpp"

#include <algorithm>

namespace vtp::eval {

ad::Tensor ExpertChunkPolicy::plan(const synth::World& world, const RecentFrames&) {
  synth::World sim = world;  // privileged copy
  ad::Array chunk(horizon_ * dim_);
  for (Index t = 0; t < horizon_; ++t) {
    ad::Array a = synth::expert_action(sim);
    chunk.segment(t * dim_, dim_) = a;
    sim.apply(a);
  }
  return ad::Tensor::from_array({horizon_, dim_}, std::move(chunk));
}

ModelChunkPolicy::ModelChunkPolicy(const policy::PolicyModel& model,
                                   train::NormalizationStats stats, policy::LatentMode mode,
                                   uint64_t seed)
    : model_(model), stats_(std::move(stats)), mode_(mode), seed_(seed) {}

ad::Tensor ModelChunkPolicy::plan(const synth::World&, const RecentFrames& recent) {
  const policy::ModelConfig& cfg = model_.config();
  policy::Observation obs;
  for (const ad::Array& img : recent.views) {
    obs.views.push_back(ad::Tensor::from_array({img.size()}, img));
  }
  std::vector<ad::Array> tact(recent.tactile.begin(), recent.tactile.end());
  ad::Tensor window = policy::build_tactile_window(tact);
  obs.tactile_window = ad::Tensor::from_array(
      window.shape(), stats_.normalize_tactile_window(window.values(), cfg.tactile_hist));
  ad::Array proprio(cfg.proprio_hist * cfg.proprio_dim());
  for (Index i = 0; i < cfg.proprio_hist; ++i) {
    proprio.segment(i * cfg.proprio_dim(), cfg.proprio_dim()) =
        recent.proprio[static_cast<size_t>(i)];
  }
  obs.proprio_window = ad::Tensor::from_array(
      {cfg.proprio_hist, cfg.proprio_dim()},
      stats_.normalize_rows(stats_.proprio, proprio, cfg.proprio_hist));

  ad::Tensor chunk = model_.infer(obs, mode_, seed_);
  if (mode_ == policy::LatentMode::SampledLatent) ++seed_;
  return ad::Tensor::from_array(
      chunk.shape(),
      stats_.denormalize_rows(stats_.action, chunk.values(), cfg.action_horizon));
}

ad::Tensor RandomChunkPolicy::plan(const synth::World&, const RecentFrames&) {
  ad::Array chunk(horizon_ * dim_);
  for (Index i = 0; i < chunk.size(); ++i) chunk(i) = stream_.uniform(-scale_, scale_);
  return ad::Tensor::from_array({horizon_, dim_}, std::move(chunk));
}

RolloutResult rollout(ChunkPolicy& pol, const synth::WorldConfig& wcfg,
                      const synth::ObsGeometry& geom, const Eigen::Vector2d& start,
                      const Eigen::Vector2d& target, const RolloutConfig& rcfg,
                      Index tactile_hist, Index proprio_hist, uint64_t noise_seed) {
  if (rcfg.replan_every < 1 || rcfg.replan_every > pol.chunk_len()) {
    throw ad::DomainError("rollout: replan_every must lie in [1, chunk_len]");
  }
  synth::World world(wcfg, geom, start, target, noise_seed);
  Index p = geom.proprio_dim();

  RecentFrames recent;
  auto observe = [&]() {
    recent.views = world.render_views();
    recent.tactile.push_back(world.tactile_channels());
    recent.proprio.push_back(world.proprio_frame());
    while (static_cast<Index>(recent.tactile.size()) > tactile_hist) recent.tactile.pop_front();
    while (static_cast<Index>(recent.proprio.size()) > proprio_hist) recent.proprio.pop_front();
  };
  // prime the history with the initial observation
  observe();
  while (static_cast<Index>(recent.tactile.size()) < tactile_hist) {
    recent.tactile.push_back(recent.tactile.back());
  }
  while (static_cast<Index>(recent.proprio.size()) < proprio_hist) {
    recent.proprio.push_back(recent.proprio.back());
  }

  RolloutResult res;
  res.min_coarse_distance = (world.state().effector - world.cell_center()).norm();

  ad::Tensor active_chunk;  // raw [H, P]
  Index cursor = 0;
  for (Index step = 0; step < rcfg.horizon; ++step) {
    if (step % rcfg.replan_every == 0) {
      ad::Tensor fresh = pol.plan(world, recent);
      if (step == 0) {
        active_chunk = fresh;
      } else {
        Index remaining = active_chunk.shape()[0] - cursor;
        Index blend = std::min(rcfg.blend_horizon, std::min(remaining, fresh.shape()[0]));
        ad::Tensor prev_tail =
            remaining > 0 ? ad::slice(active_chunk, 0, cursor, active_chunk.shape()[0])
                          : fresh;
        active_chunk = policy::temporal_smooth(prev_tail, fresh, blend);
      }
      cursor = 0;
    }
    ad::Array action = active_chunk.values().segment(cursor * p, p);
    ++cursor;
    world.apply(action);
    observe();
    res.min_coarse_distance =
        std::min(res.min_coarse_distance, (world.state().effector - world.cell_center()).norm());
    ++res.steps;
    if (world.state().phase == synth::TaskPhase::Done) break;
  }
  res.final_phase = world.state().phase;
  res.final_distance = world.target_distance();
  res.success = res.final_phase == synth::TaskPhase::Done &&
                res.final_distance <= wcfg.tolerance;
  return res;
}

EvalEnv eval_env(const synth::WorldConfig& wcfg, uint64_t seed, Index index) {
  rng::Stream rs(rng::mix_seed(seed ^ 0xe7a1u, static_cast<uint64_t>(index)));
  double m = wcfg.placement_margin;
  Eigen::Vector2d target(rs.uniform(m, 1.0 - m), rs.uniform(m, 1.0 - m));
  Eigen::Vector2d start;
  do {
    start = {rs.uniform(m, 1.0 - m), rs.uniform(m, 1.0 - m)};
  } while ((start - target).norm() < wcfg.min_start_separation);
  return {start, target};
}

std::vector<double> score_rollout(const RolloutResult& r, const ScoreBands& bands) {
  double stage1;
  if (r.min_coarse_distance <= bands.align_radius) {
    stage1 = 3.0;
  } else if (r.min_coarse_distance <= 2.0 * bands.align_radius) {
    stage1 = 2.0;
  } else if (r.min_coarse_distance <= 4.0 * bands.align_radius) {
    stage1 = 1.0;
  } else {
    stage1 = 0.0;
  }
  double stage2;
  if (r.final_phase == synth::TaskPhase::Done && r.final_distance <= bands.tolerance) {
    stage2 = 3.0;
  } else if (r.final_distance <= 2.0 * bands.tolerance) {
    stage2 = 2.0;
  } else if (r.final_distance <= 4.0 * bands.tolerance) {
    stage2 = 1.0;
  } else {
    stage2 = 0.0;
  }
  return {stage1, stage2};
}

}  // namespace vtp::eval

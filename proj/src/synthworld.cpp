#include "vtp/synthworld.hpp"

#include <algorithm>
#include <cmath>

namespace vtp::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double halton(Index index, Index base) {
  double f = 1.0, r = 0.0;
  Index i = index;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace

const char* phase_name(TaskPhase p) {
  switch (p) {
    case TaskPhase::Approach: return "approach";
    case TaskPhase::Align: return "align";
    case TaskPhase::Insert: return "insert";
    case TaskPhase::Done: return "done";
  }
  return "?";
}

Index ObsGeometry::proprio_dim() const {
  Index n = 0;
  for (Index g : proprio_groups) n += g;
  return n;
}

Index ObsGeometry::group_offset(size_t g) const {
  Index off = 0;
  for (size_t i = 0; i < g; ++i) off += proprio_groups[i];
  return off;
}

void WorldConfig::validate() const {
  if (!(tolerance > 0.0) || !(quantization > 0.0)) {
    throw ad::DomainError("world: tolerance and quantization must be positive");
  }
  if (!(tolerance < 0.5 * quantization)) {
    throw ad::DomainError(
        "world: information gap requires tolerance < quantization/2 (got tolerance=" +
        std::to_string(tolerance) + ", quantization=" + std::to_string(quantization) +
        "); a vision-only policy could localize the target otherwise");
  }
  if (bump_sigma <= 0.0 || max_step <= 0.0 || fine_step <= 0.0 || horizon < 2 ||
      tactile_channels < 1) {
    throw ad::DomainError("world: invalid dynamics constants");
  }
  if (!(bump_kappa >= 0.0) || !(bump_kappa < 1.0)) {
    throw ad::DomainError("world: bump_kappa must be in [0,1) to keep channel peaks at the target");
  }
}

World::World(const WorldConfig& cfg, const ObsGeometry& geom, const Eigen::Vector2d& start,
             const Eigen::Vector2d& target, uint64_t noise_seed)
    : cfg_(cfg), geom_(geom), noise_(noise_seed) {
  cfg_.validate();
  if (geom_.proprio_groups.size() < 2 || geom_.proprio_groups[0] < 2) {
    throw ad::ShapeError("world: proprio layout needs an arm group of >= 2 dims plus a hand group");
  }
  state_.effector = start;
  state_.target = target;
}

double World::bump(double d) const { return std::exp(-d * d / (2.0 * cfg_.bump_sigma * cfg_.bump_sigma)); }

ad::Array World::tactile_channels() const {
  Index c = cfg_.tactile_channels;
  ad::Array out(c);
  Eigen::Vector2d delta = state_.target - state_.effector;
  double d = delta.norm();
  double base = bump(d);
  double theta = (d > 0.0) ? std::atan2(delta.y(), delta.x()) : 0.0;
  double h = d * d / (d * d + cfg_.bump_sigma * cfg_.bump_sigma);
  for (Index i = 0; i < c; ++i) {
    double phase = kTwoPi * static_cast<double>(i) / static_cast<double>(c);
    double angular = std::exp(cfg_.bump_kappa * (std::cos(theta - phase) - 1.0) * h);
    out(i) = base * angular;
  }
  if (cfg_.noise_std > 0.0) {
    for (Index i = 0; i < c; ++i) out(i) += cfg_.noise_std * noise_.normal();
  }
  return out;
}

Eigen::Vector2d World::cell_center() const {
  double q = cfg_.quantization;
  auto center = [q](double v) {
    double cell = std::floor(v / q);
    return (cell + 0.5) * q;
  };
  return {center(state_.target.x()), center(state_.target.y())};
}

std::vector<ad::Array> World::render_views() const {
  std::vector<ad::Array> out;
  out.reserve(geom_.views.size());
  double q = cfg_.quantization;
  Eigen::Vector2d cc = cell_center();
  for (const ViewGeometry& view : geom_.views) {
    ad::Array img = ad::Array::Zero(view.pixel_count());
    double x0 = 0.0, y0 = 0.0, span = 1.0;
    if (view.kind == 1) {
      span = 4.0 * q;
      x0 = std::clamp(state_.effector.x() - 0.5 * span, 0.0, 1.0 - span);
      y0 = std::clamp(state_.effector.y() - 0.5 * span, 0.0, 1.0 - span);
    }
    double splat = span / static_cast<double>(view.width);
    for (Index r = 0; r < view.height; ++r) {
      for (Index col = 0; col < view.width; ++col) {
        double px = x0 + (static_cast<double>(col) + 0.5) / static_cast<double>(view.width) * span;
        double py = y0 + (static_cast<double>(r) + 0.5) / static_cast<double>(view.height) * span;
        bool in_cell = std::abs(px - cc.x()) <= 0.5 * q && std::abs(py - cc.y()) <= 0.5 * q;
        double de2 = (px - state_.effector.x()) * (px - state_.effector.x()) +
                     (py - state_.effector.y()) * (py - state_.effector.y());
        double v = 0.45 * (in_cell ? 1.0 : 0.0) + std::exp(-de2 / (2.0 * splat * splat));
        if (view.kind == 1 && state_.contact) v += 0.15;
        for (Index ch = 0; ch < view.channels; ++ch) {
          img(((r * view.width) + col) * view.channels + ch) = v;
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

ad::Array World::proprio_frame() const {
  ad::Array p = ad::Array::Zero(geom_.proprio_dim());
  p(0) = state_.effector.x();
  p(1) = state_.effector.y();
  return p;
}

void World::apply(const ad::Array& action) {
  if (action.size() != geom_.proprio_dim()) {
    throw ad::ShapeError("world: action width " + std::to_string(action.size()) +
                         " != proprio dim " + std::to_string(geom_.proprio_dim()));
  }
  TaskPhase phase_before = state_.phase;
  Eigen::Vector2d delta(action(0), action(1));
  double n = delta.norm();
  if (n > cfg_.max_step) delta *= cfg_.max_step / n;
  state_.effector += delta;
  state_.effector.x() = std::clamp(state_.effector.x(), 0.0, 1.0);
  state_.effector.y() = std::clamp(state_.effector.y(), 0.0, 1.0);

  double d = target_distance();
  state_.contact = bump(d) > cfg_.contact_threshold;

  double insert_cmd = action(geom_.group_offset(1));
  if (state_.phase == TaskPhase::Approach &&
      (state_.effector - cell_center()).norm() <= cfg_.align_radius) {
    state_.phase = TaskPhase::Align;
  }
  if (state_.phase == TaskPhase::Align && d <= cfg_.tolerance) {
    state_.phase = TaskPhase::Insert;
  }
  if (phase_before == TaskPhase::Insert && insert_cmd > 0.5 && d <= cfg_.tolerance) {
    state_.phase = TaskPhase::Done;
  }
  ++state_.step_index;
}

ad::Array expert_action(const World& world) {
  const WorldState& s = world.state();
  const WorldConfig& cfg = world.config();
  ad::Array a = ad::Array::Zero(world.geometry().proprio_dim());
  switch (s.phase) {
    case TaskPhase::Approach: {
      Eigen::Vector2d dir = world.cell_center() - s.effector;
      double n = dir.norm();
      if (n > 1e-12) dir *= std::min(1.0, cfg.max_step / n);
      a(0) = dir.x();
      a(1) = dir.y();
      break;
    }
    case TaskPhase::Align: {
      // the fine phase follows the tactile bump gradient, which points at
      // the true target; the insert command is held high through the whole
      // fine phase so the demonstrations carry a dense grasp signal
      Eigen::Vector2d dir = s.target - s.effector;
      double n = dir.norm();
      if (n > 1e-12) dir *= std::min(1.0, cfg.fine_step / n);
      a(0) = dir.x();
      a(1) = dir.y();
      a(world.geometry().group_offset(1)) = 1.0;
      break;
    }
    case TaskPhase::Insert:
      a(world.geometry().group_offset(1)) = 1.0;
      break;
    case TaskPhase::Done:
      break;
  }
  return a;
}

Eigen::Vector2d halton_point(Index index) {
  return {halton(index + 1, 2), halton(index + 1, 3)};
}

Episode generate_episode(const GeneratorConfig& gen, Index index) {
  gen.world.validate();
  uint64_t sub_seed = rng::mix_seed(gen.seed, static_cast<uint64_t>(index));
  rng::Stream rs(sub_seed);

  double m = gen.world.placement_margin;
  Eigen::Vector2d base = halton_point(index);
  double jitter = 0.125 * gen.world.quantization;
  Eigen::Vector2d target(
      std::clamp(m + base.x() * (1.0 - 2.0 * m) + rs.uniform(-jitter, jitter), m, 1.0 - m),
      std::clamp(m + base.y() * (1.0 - 2.0 * m) + rs.uniform(-jitter, jitter), m, 1.0 - m));

  Eigen::Vector2d start;
  do {
    start = {rs.uniform(m, 1.0 - m), rs.uniform(m, 1.0 - m)};
  } while ((start - target).norm() < gen.world.min_start_separation);

  World world(gen.world, gen.geometry, start, target, rng::mix_seed(sub_seed, 1));

  Episode ep;
  ep.task_id = gen.task_id;
  ep.seed = sub_seed;
  ep.start = start;
  ep.target = target;
  ep.world = gen.world;
  ep.proprio_groups = gen.geometry.proprio_groups;
  ep.views = gen.geometry.views;

  for (Index t = 0; t < gen.world.horizon; ++t) {
    FrameRecord frame;
    frame.views = world.render_views();
    frame.tactile = world.tactile_channels();
    frame.proprio = world.proprio_frame();
    if (world.state().phase == TaskPhase::Done) {
      frame.action = ad::Array::Zero(gen.geometry.proprio_dim());
      ep.frames.push_back(std::move(frame));
      break;
    }
    frame.action = expert_action(world);
    world.apply(frame.action);
    ep.frames.push_back(std::move(frame));
  }
  ep.success = world.state().phase == TaskPhase::Done &&
               world.target_distance() <= gen.world.tolerance;
  return ep;
}

std::vector<Episode> generate_dataset(const GeneratorConfig& gen) {
  std::vector<Episode> out;
  out.reserve(static_cast<size_t>(gen.episodes));
  for (Index i = 0; i < gen.episodes; ++i) out.push_back(generate_episode(gen, i));
  return out;
}

std::string verify_replay(const Episode& ep) {
  World world(ep.world, ep.geometry(), ep.start, ep.target, rng::mix_seed(ep.seed, 1));
  auto arrays_equal = [](const ad::Array& a, const ad::Array& b) {
    return a.size() == b.size() && (a == b).all();
  };
  for (Index t = 0; t < ep.length(); ++t) {
    const FrameRecord& f = ep.frames[static_cast<size_t>(t)];
    std::vector<ad::Array> views = world.render_views();
    ad::Array tactile = world.tactile_channels();
    ad::Array proprio = world.proprio_frame();
    for (size_t v = 0; v < views.size(); ++v) {
      if (!arrays_equal(views[v], f.views[v])) {
        return "frame " + std::to_string(t) + ": view " + std::to_string(v) + " differs";
      }
    }
    if (!arrays_equal(tactile, f.tactile)) return "frame " + std::to_string(t) + ": tactile differs";
    if (!arrays_equal(proprio, f.proprio)) return "frame " + std::to_string(t) + ": proprio differs";
    if (t + 1 < ep.length()) world.apply(f.action);
  }
  return {};
}

}  // namespace vtp::synth

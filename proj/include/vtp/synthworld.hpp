#pragma once

// Deterministic 2-D insertion world. A hidden target sits in the unit
// workspace; cameras only ever see its quantized cell, while a ring of
// tactile channels peaks exactly at the target and carries direction in its
// angular phases. With success tolerance below half the visual quantization
// the task is unsolvable from vision alone, which is the property the
// ablation sweep exercises.

#include "vtp/rng.hpp"
#include "vtp/tensor.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace vtp::synth {

using ad::Index;

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ViewGeometry {
  Index height = 16;
  Index width = 16;
  Index channels = 1;
  // view kind 0: full-workspace overhead; kind 1: effector-centered zoom
  Index kind = 0;

  Index pixel_count() const { return height * width * channels; }
};

struct ObsGeometry {
  std::vector<ViewGeometry> views = {{16, 16, 1, 0}, {16, 16, 1, 1}};
  std::vector<Index> proprio_groups = {2, 1, 1, 1, 1};

  Index proprio_dim() const;
  Index group_offset(size_t g) const;
};

struct WorldConfig {
  double quantization = 0.25;  // visual target cell size q
  double tolerance = 0.05;     // success tolerance tau
  double bump_sigma = 0.15;
  double bump_kappa = 0.9;     // angular modulation strength, < 1 keeps peak at the target
  double max_step = 0.05;
  double fine_step = 0.02;
  double align_radius = 0.125;
  double contact_threshold = 0.5;
  double min_start_separation = 0.25;
  double placement_margin = 0.08;
  double noise_std = 0.0;  // optional sensor noise, off by default
  Index horizon = 80;
  Index tactile_channels = 12;  // C
  double dt = 0.1;

  // Rejects worlds where the information gap does not bind (tau >= q/2).
  void validate() const;
};

enum class TaskPhase : int { Approach = 0, Align = 1, Insert = 2, Done = 3 };

const char* phase_name(TaskPhase p);

struct WorldState {
  Eigen::Vector2d effector{0.1, 0.1};
  Eigen::Vector2d target{0.8, 0.8};
  bool contact = false;
  TaskPhase phase = TaskPhase::Approach;
  Index step_index = 0;
};

struct FrameRecord {
  std::vector<ad::Array> views;
  ad::Array tactile;  // [C] raw channels
  ad::Array proprio;  // [P]
  ad::Array action;   // [P] expert action taken from this observation
};

struct Episode {
  std::string task_id;
  uint64_t seed = 0;
  Eigen::Vector2d start{0, 0};
  Eigen::Vector2d target{0, 0};
  WorldConfig world;  // constants embedded so a file is replayable on its own
  std::vector<Index> proprio_groups;
  std::vector<ViewGeometry> views;
  std::vector<FrameRecord> frames;
  bool success = false;

  Index length() const { return static_cast<Index>(frames.size()); }
  ObsGeometry geometry() const { return ObsGeometry{views, proprio_groups}; }
};

class World {
 public:
  World(const WorldConfig& cfg, const ObsGeometry& geom, const Eigen::Vector2d& start,
        const Eigen::Vector2d& target, uint64_t noise_seed = 0);

  const WorldState& state() const { return state_; }
  const WorldConfig& config() const { return cfg_; }
  const ObsGeometry& geometry() const { return geom_; }

  // Deterministic tactile field: radial Gaussian bump times a bounded
  // angular factor that equals 1 at zero distance, so every channel attains
  // its maximum exactly at the target.
  ad::Array tactile_channels() const;
  std::vector<ad::Array> render_views() const;
  ad::Array proprio_frame() const;

  Eigen::Vector2d cell_center() const;  // center of the target's visual cell

  // Applies one action frame (effector delta in the first arm group, insert
  // command in the first hand dim), advances phases, returns nothing; read
  // observations through the accessors above.
  void apply(const ad::Array& action);

  double target_distance() const { return (state_.effector - state_.target).norm(); }

 private:
  double bump(double d) const;

  WorldConfig cfg_;
  ObsGeometry geom_;
  WorldState state_;
  mutable rng::Stream noise_;
};

// Scripted demonstrator: pure pursuit of the visual cell center, then a
// tactile-gradient fine phase toward the true target, then insert.
ad::Array expert_action(const World& world);

struct GeneratorConfig {
  WorldConfig world;
  ObsGeometry geometry;
  Index episodes = 50;
  uint64_t seed = 0;
  std::string task_id = "synth_insertion";
};

// Episode i uses sub-seed mix_seed(seed, i); target placement is a jittered
// Halton sequence so any reasonably sized dataset covers the workspace.
Episode generate_episode(const GeneratorConfig& gen, Index index);
std::vector<Episode> generate_dataset(const GeneratorConfig& gen);

// Low-discrepancy base point for episode `index` (before jitter), exposed
// for the coverage test.
Eigen::Vector2d halton_point(Index index);

// Re-runs the recorded actions from the episode's initial state and checks
// every observation stream byte-for-byte. Returns an empty string on
// success, otherwise a description of the first mismatch.
std::string verify_replay(const Episode& ep);

}  // namespace vtp::synth

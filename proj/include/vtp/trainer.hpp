#pragma once

// Two-phase curriculum training loop. Epochs below ceil(switch_fraction *
// total) condition action generation on ground-truth future tactile
// windows; the rest feed the model's own forecast back in. One optimizer
// step per batch; everything is a pure function of (dataset, options), so
// reruns reproduce logs and checkpoints byte-for-byte.

#include "vtp/losses.hpp"
#include "vtp/normalization.hpp"
#include "vtp/optimizer.hpp"
#include "vtp/policy.hpp"
#include "vtp/synthworld.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vtp::train {

struct CurriculumSchedule {
  ad::Index total_epochs = 100;
  double switch_fraction = 0.75;

  ad::Index switch_epoch() const;
  policy::Phase phase(ad::Index epoch) const;
};

struct TrainOptions {
  ad::Index epochs = 100;
  ad::Index batch_size = 8;
  double switch_fraction = 0.75;
  double lr = 1e-3;
  uint64_t seed = 0;
  LossWeights weights;
  // Each epoch draws this many random timesteps per episode (chunk-style
  // training visits episodes, not every frame).
  ad::Index samples_per_episode = 4;
  ad::Index checkpoint_every = 0;  // 0: only the final checkpoint
  uint64_t config_digest = 0;
  uint64_t model_digest = 0;
  std::optional<std::filesystem::path> checkpoint_path;
  bool log_wall_ms = true;  // fixed 0 when false (byte-stable logs for tests)
};

struct EpochRow {
  ad::Index epoch;
  policy::Phase phase;
  double total, kl, ja, tactile, arm;
  double wall_ms;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  NormalizationStats stats;
};

// Samples, windows and targets assembled from one episode timestep.
// Action chunks beyond the episode end are padded with zero actions (the
// world is stationary after completion); future tactile windows repeat the
// final frame, whose deltas are genuinely zero.
policy::TrainSample make_sample(const synth::Episode& ep, ad::Index t,
                                const policy::ModelConfig& cfg,
                                const NormalizationStats& stats);

// Valid observation indices for an episode under the configured histories.
ad::Index first_valid_index(const policy::ModelConfig& cfg);

NormalizationStats compute_stats(const std::vector<synth::Episode>& episodes,
                                 const policy::ModelConfig& cfg);

// One row per epoch: epoch, phase, L_total, L_KL, L_JA, L_tactile, L_arm,
// wall_ms, tab-separated, with the config digest on a comment line.
void write_metrics_log(std::ostream& os, const std::vector<EpochRow>& rows,
                       uint64_t config_digest);

TrainResult train_policy(policy::PolicyModel& model, const std::vector<synth::Episode>& episodes,
                         const TrainOptions& opts, std::ostream* metrics_log = nullptr);

// Loss evaluation helper shared by training and the acceptance checks.
LossBundle sample_losses(const policy::PolicyModel& model, const policy::ForwardResult& fwd,
                         const policy::TrainSample& sample, const LossWeights& weights,
                         const NormalizationStats& stats);

// Mean future-tactile L1 of the model (zero latent) over every valid
// timestep of the given episodes, in normalized units.
double heldout_tactile_l1(const policy::PolicyModel& model,
                          const std::vector<synth::Episode>& episodes,
                          const NormalizationStats& stats);

}  // namespace vtp::train

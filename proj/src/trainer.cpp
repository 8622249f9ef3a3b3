#include "vtp/trainer.hpp"

#include "vtp/checkpoint.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace vtp::train {

ad::Index CurriculumSchedule::switch_epoch() const {
  if (!(switch_fraction > 0.0) || !(switch_fraction <= 1.0)) {
    throw ad::DomainError("curriculum: switch fraction must lie in (0,1]");
  }
  // small slack keeps exact products like 0.75*100 from ceiling up on fp dust
  return static_cast<ad::Index>(
      std::ceil(switch_fraction * static_cast<double>(total_epochs) - 1e-9));
}

policy::Phase CurriculumSchedule::phase(ad::Index epoch) const {
  if (epoch < 0 || epoch >= total_epochs) {
    throw ad::DomainError("curriculum: epoch " + std::to_string(epoch) + " outside [0," +
                          std::to_string(total_epochs) + ")");
  }
  return epoch < switch_epoch() ? policy::Phase::GroundTruthTactile
                                : policy::Phase::PredictedTactile;
}

ad::Index first_valid_index(const policy::ModelConfig&) {
  // observation windows pad backwards by repeating frame 0 (a stationary
  // history, matching how rollouts prime theirs), so every index works
  return 0;
}

NormalizationStats compute_stats(const std::vector<synth::Episode>& episodes,
                                 const policy::ModelConfig& cfg) {
  if (episodes.empty()) throw ad::NumericError("stats: empty dataset");
  StatsAccumulator proprio(cfg.proprio_dim());
  StatsAccumulator action(cfg.proprio_dim());
  StatsAccumulator raw(cfg.tactile_channels);
  StatsAccumulator delta(cfg.tactile_channels);
  for (const synth::Episode& ep : episodes) {
    for (size_t t = 0; t < ep.frames.size(); ++t) {
      const synth::FrameRecord& f = ep.frames[t];
      proprio.add(f.proprio);
      action.add(f.action);
      raw.add(f.tactile);
      delta.add(t == 0 ? ad::Array(ad::Array::Zero(cfg.tactile_channels))
                       : ad::Array(f.tactile - ep.frames[t - 1].tactile));
    }
  }
  NormalizationStats s;
  s.proprio = proprio.finish();
  s.action = action.finish();
  s.tactile_raw = raw.finish();
  s.tactile_delta = delta.finish();
  return s;
}

policy::TrainSample make_sample(const synth::Episode& ep, ad::Index t,
                                const policy::ModelConfig& cfg,
                                const NormalizationStats& stats) {
  ad::Index len = ep.length();
  if (t < first_valid_index(cfg) || t >= len) {
    throw ad::DomainError("sample index " + std::to_string(t) + " invalid for episode length " +
                          std::to_string(len));
  }
  policy::TrainSample s;

  for (size_t v = 0; v < ep.views.size(); ++v) {
    const ad::Array& img = ep.frames[static_cast<size_t>(t)].views[v];
    s.obs.views.push_back(ad::Tensor::from_array({img.size()}, img));
  }

  auto clamp_index = [](ad::Index i) { return std::max<ad::Index>(i, 0); };

  std::vector<ad::Array> tact_frames;
  for (ad::Index i = t - cfg.tactile_hist + 1; i <= t; ++i) {
    tact_frames.push_back(ep.frames[static_cast<size_t>(clamp_index(i))].tactile);
  }
  ad::Tensor tact_window = policy::build_tactile_window(tact_frames);
  s.obs.tactile_window = ad::Tensor::from_array(
      tact_window.shape(),
      stats.normalize_tactile_window(tact_window.values(), cfg.tactile_hist));

  ad::Array proprio(cfg.proprio_hist * cfg.proprio_dim());
  for (ad::Index i = 0; i < cfg.proprio_hist; ++i) {
    proprio.segment(i * cfg.proprio_dim(), cfg.proprio_dim()) =
        ep.frames[static_cast<size_t>(clamp_index(t - cfg.proprio_hist + 1 + i))].proprio;
  }
  s.obs.proprio_window = ad::Tensor::from_array(
      {cfg.proprio_hist, cfg.proprio_dim()},
      stats.normalize_rows(stats.proprio, proprio, cfg.proprio_hist));

  ad::Array actions = ad::Array::Zero(cfg.action_horizon * cfg.proprio_dim());
  for (ad::Index i = 0; i < cfg.action_horizon; ++i) {
    ad::Index src = t + i;
    if (src < len) {
      actions.segment(i * cfg.proprio_dim(), cfg.proprio_dim()) =
          ep.frames[static_cast<size_t>(src)].action;
    }
    // beyond the episode end the expert holds still: zero action
  }
  s.expert_actions = ad::Tensor::from_array(
      {cfg.action_horizon, cfg.proprio_dim()},
      stats.normalize_rows(stats.action, actions, cfg.action_horizon));

  std::vector<ad::Array> future_frames;
  for (ad::Index i = 1; i <= cfg.future_horizon; ++i) {
    ad::Index src = std::min<ad::Index>(t + i, len - 1);
    future_frames.push_back(ep.frames[static_cast<size_t>(src)].tactile);
  }
  ad::Tensor future = policy::build_tactile_window(future_frames);
  s.future_tactile = ad::Tensor::from_array(
      future.shape(),
      stats.normalize_tactile_window(future.values(), cfg.future_horizon));
  return s;
}

LossBundle sample_losses(const policy::PolicyModel& model, const policy::ForwardResult& fwd,
                         const policy::TrainSample& sample, const LossWeights& weights,
                         const NormalizationStats& stats) {
  const policy::ModelConfig& cfg = model.config();
  LossBundle bundle;
  bundle.kl = kl_diag_gaussian(fwd.mu, fwd.logvar);
  bundle.ja = action_l1(fwd.pred_actions, sample.expert_actions);
  if (fwd.has_tactile) {
    bundle.tactile = tactile_l1(fwd.pred_tactile, sample.future_tactile);
    bundle.has_tactile = true;
  }
  if (policy::has_arm_loss(cfg.variant) && weights.w_arm > 0.0) {
    ad::Index rows = cfg.action_horizon, p = cfg.proprio_dim();
    ad::Array std_rep(rows * p), mean_rep(rows * p);
    for (ad::Index r = 0; r < rows; ++r) {
      std_rep.segment(r * p, p) = stats.action.std;
      mean_rep.segment(r * p, p) = stats.action.mean;
    }
    ad::Tensor std_mat = ad::Tensor::from_array({rows, p}, std::move(std_rep));
    ad::Tensor mean_mat = ad::Tensor::from_array({rows, p}, std::move(mean_rep));
    ad::Tensor pred_raw = ad::add(ad::mul(fwd.pred_actions, std_mat), mean_mat);
    ad::Tensor target_raw = ad::add(ad::mul(sample.expert_actions, std_mat), mean_mat);
    PlanarArmFk fk(3);
    ArmLayout layout = ArmLayout::from_groups(cfg.proprio_groups, fk.joint_count());
    bundle.arm = arm_loss(pred_raw, target_raw, layout, fk, weights.lambda_pos,
                          weights.lambda_rot);
    bundle.has_arm = true;
  }
  bundle.total = composite_loss(bundle, weights);
  return bundle;
}

namespace {

void write_log_header(std::ostream& os, uint64_t config_digest) {
  char digest_hex[32];
  std::snprintf(digest_hex, sizeof(digest_hex), "%016llx",
                static_cast<unsigned long long>(config_digest));
  os << "# config_digest=" << digest_hex << "\n";
  os << "# epoch\tphase\tl_total\tl_kl\tl_ja\tl_tactile\tl_arm\twall_ms\n";
}

void write_log_row(std::ostream& os, const EpochRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld\t%s\t%.12g\t%.12g\t%.12g\t%.12g\t%.12g\t%.3f\n",
                static_cast<long long>(r.epoch), policy::phase_name(r.phase), r.total, r.kl,
                r.ja, r.tactile, r.arm, r.wall_ms);
  os << buf;
}

}  // namespace

void write_metrics_log(std::ostream& os, const std::vector<EpochRow>& rows,
                       uint64_t config_digest) {
  write_log_header(os, config_digest);
  for (const EpochRow& r : rows) write_log_row(os, r);
}

TrainResult train_policy(policy::PolicyModel& model, const std::vector<synth::Episode>& episodes,
                         const TrainOptions& opts, std::ostream* metrics_log) {
  if (episodes.empty()) throw ad::NumericError("train: empty dataset");
  opts.weights.validate();
  const policy::ModelConfig& cfg = model.config();

  TrainResult result;
  result.stats = compute_stats(episodes, cfg);
  CurriculumSchedule schedule{opts.epochs, opts.switch_fraction};
  Adam adam(AdamConfig{opts.lr, 0.9, 0.999, 1e-8});

  ad::Index first_t = first_valid_index(cfg);
  for (const synth::Episode& ep : episodes) {
    if (ep.length() < 1) throw ad::NumericError("train: empty episode");
  }

  if (metrics_log != nullptr) write_log_header(*metrics_log, opts.config_digest);

  for (ad::Index epoch = 0; epoch < opts.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    policy::Phase epoch_phase = schedule.phase(epoch);
    // variants without the forecasting head always train on ground truth
    policy::Phase phase = policy::has_autoregressive(cfg.variant)
                              ? epoch_phase
                              : policy::Phase::GroundTruthTactile;

    rng::Stream stream(rng::mix_seed(opts.seed, static_cast<uint64_t>(epoch)));
    std::vector<std::pair<size_t, ad::Index>> order;
    for (size_t e = 0; e < episodes.size(); ++e) {
      ad::Index len = episodes[e].length();
      for (ad::Index s = 0; s < opts.samples_per_episode; ++s) {
        ad::Index t = first_t + static_cast<ad::Index>(stream.below(
                                    static_cast<uint64_t>(len - first_t)));
        order.emplace_back(e, t);
      }
    }
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(stream.below(i));
      std::swap(order[i - 1], order[j]);
    }

    double sum_total = 0, sum_kl = 0, sum_ja = 0, sum_tact = 0, sum_arm = 0;
    ad::Index n_samples = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opts.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(opts.batch_size));
      ad::Index bsz = static_cast<ad::Index>(stop - start);

      ad::Tape tape;
      model.params().zero_grads();
      ad::Tensor kl_sum, ja_sum, tact_sum, arm_sum;
      bool any_tact = false, any_arm = false;
      for (size_t i = start; i < stop; ++i) {
        auto [e, t] = order[i];
        policy::TrainSample sample = make_sample(episodes[e], t, cfg, result.stats);
        ad::Tensor noise = ad::Tensor::zeros({cfg.latent_dim});
        for (ad::Index zi = 0; zi < cfg.latent_dim; ++zi) {
          noise.mutable_values()(zi) = stream.normal();
        }
        policy::ForwardResult fwd = model.forward_sample(sample, phase, noise);
        LossBundle parts = sample_losses(model, fwd, sample, opts.weights, result.stats);
        kl_sum = i == start ? parts.kl : ad::add(kl_sum, parts.kl);
        ja_sum = i == start ? parts.ja : ad::add(ja_sum, parts.ja);
        if (parts.has_tactile) {
          tact_sum = any_tact ? ad::add(tact_sum, parts.tactile) : parts.tactile;
          any_tact = true;
        }
        if (parts.has_arm) {
          arm_sum = any_arm ? ad::add(arm_sum, parts.arm) : parts.arm;
          any_arm = true;
        }
      }
      LossBundle batch;
      batch.kl = ad::div(kl_sum, static_cast<double>(bsz));
      batch.ja = ad::div(ja_sum, static_cast<double>(bsz));
      if (any_tact) {
        batch.tactile = ad::div(tact_sum, static_cast<double>(bsz));
        batch.has_tactile = true;
      }
      if (any_arm) {
        batch.arm = ad::div(arm_sum, static_cast<double>(bsz));
        batch.has_arm = true;
      }
      batch.total = composite_loss(batch, opts.weights);
      if (!std::isfinite(batch.total_value())) {
        throw ad::NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                               " batch " + std::to_string(start / opts.batch_size));
      }
      double b = static_cast<double>(bsz);
      sum_total += batch.total_value() * b;
      sum_kl += batch.kl_value() * b;
      sum_ja += batch.ja_value() * b;
      sum_tact += batch.tactile_value() * b;
      sum_arm += batch.arm_value() * b;
      n_samples += bsz;

      tape.backward(batch.total);
      adam.step(model.params());
    }

    auto t1 = std::chrono::steady_clock::now();
    double wall = opts.log_wall_ms
                      ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                      : 0.0;
    double n = static_cast<double>(n_samples);
    EpochRow row{epoch,        epoch_phase,  sum_total / n, sum_kl / n,
                 sum_ja / n,   sum_tact / n, sum_arm / n,   wall};
    result.rows.push_back(row);
    if (metrics_log != nullptr) write_log_row(*metrics_log, row);

    if (opts.checkpoint_path.has_value() && opts.checkpoint_every > 0 &&
        (epoch + 1) % opts.checkpoint_every == 0 && epoch + 1 < opts.epochs) {
      policy::save_checkpoint(opts.checkpoint_path->string() + ".epoch" + std::to_string(epoch),
                              model.params(), result.stats.to_blobs(), opts.config_digest,
                              opts.model_digest);
    }
  }

  if (opts.checkpoint_path.has_value()) {
    policy::save_checkpoint(*opts.checkpoint_path, model.params(), result.stats.to_blobs(),
                            opts.config_digest, opts.model_digest);
  }
  return result;
}

double heldout_tactile_l1(const policy::PolicyModel& model,
                          const std::vector<synth::Episode>& episodes,
                          const NormalizationStats& stats) {
  const policy::ModelConfig& cfg = model.config();
  if (!policy::has_tactile_head(cfg.variant)) {
    throw std::invalid_argument("held-out tactile error needs a variant with the forecast head");
  }
  double sum = 0.0;
  long count = 0;
  for (const synth::Episode& ep : episodes) {
    for (ad::Index t = first_valid_index(cfg); t < ep.length(); ++t) {
      policy::TrainSample s = make_sample(ep, t, cfg, stats);
      policy::ForwardResult fwd = model.infer_full(s.obs, policy::LatentMode::ZeroLatent);
      sum += (fwd.pred_tactile.values() - s.future_tactile.values()).abs().mean();
      ++count;
    }
  }
  if (count == 0) throw ad::NumericError("held-out evaluation: no valid samples");
  return sum / static_cast<double>(count);
}

}  // namespace vtp::train

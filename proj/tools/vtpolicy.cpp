// Command-line front end: dataset generation, training, closed-loop
// evaluation, the ablation sweep, gradient verification, and HNS scoring.
// Non-interactive by design; every command writes digest-stamped report
// files and is deterministic given its config.

#include "CLI11.hpp"

#include "vtp/checkpoint.hpp"
#include "vtp/config.hpp"
#include "vtp/episode_io.hpp"
#include "vtp/hns.hpp"
#include "vtp/rollout_eval.hpp"
#include "vtp/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace vtp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerification = 4;

std::string hex_digest(uint64_t d) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

config::RunConfig load_config(const std::string& path, std::optional<uint64_t> seed) {
  config::RunConfig cfg =
      path.empty() ? config::RunConfig::defaults() : config::RunConfig::from_file(path);
  if (seed.has_value()) cfg.override_seed(*seed);
  return cfg;
}

void check_dataset_geometry(const std::vector<synth::Episode>& episodes,
                            const policy::ModelConfig& mc) {
  if (episodes.empty()) throw config::ConfigError("dataset is empty");
  const synth::Episode& ep = episodes.front();
  synth::ObsGeometry geom = ep.geometry();
  if (geom.proprio_dim() != mc.proprio_dim() ||
      ep.world.tactile_channels != mc.tactile_channels ||
      static_cast<ad::Index>(ep.views.size()) != static_cast<ad::Index>(mc.views.size())) {
    throw config::ConfigError("dataset geometry does not match the model config");
  }
}

int cmd_datagen(const config::RunConfig& cfg, const fs::path& out_dir) {
  synth::GeneratorConfig gen = cfg.generator_config();
  std::vector<synth::Episode> episodes = synth::generate_dataset(gen);
  auto rows = synth::write_dataset(out_dir, episodes, cfg.digest());
  int successes = 0;
  ad::Index frames = 0;
  for (const auto& r : rows) {
    successes += r.success ? 1 : 0;
    frames += r.length;
  }
  std::cout << "wrote " << rows.size() << " episodes (" << frames << " frames, " << successes
            << " successful) to " << out_dir.string() << "\n";
  std::cout << "config_digest " << hex_digest(cfg.digest()) << "\n";
  return kExitOk;
}

int cmd_train(const config::RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir) {
  std::vector<synth::Episode> episodes = synth::read_dataset(data_dir);
  policy::ModelConfig mc = cfg.model_config();
  check_dataset_geometry(episodes, mc);

  train::TrainOptions opts = cfg.train_options();
  fs::create_directories(out_dir);
  opts.checkpoint_path = out_dir / "model.vtck";

  policy::PolicyModel model(mc, opts.seed);
  std::ofstream log(out_dir / "metrics.tsv", std::ios::trunc);
  if (!log) throw synth::IoError("cannot open metrics log in " + out_dir.string());

  train::TrainResult result = train::train_policy(model, episodes, opts, &log);
  if (!result.rows.empty()) {
    const train::EpochRow& last = result.rows.back();
    if (!std::isfinite(last.total)) {
      throw ad::NumericError("final loss is not finite");
    }
    std::cout << "trained " << opts.epochs << " epochs; final loss " << last.total
              << " (epoch 0: " << result.rows.front().total << ")\n";
  } else {
    std::cout << "wrote an untrained checkpoint (0 epochs)\n";
  }
  std::cout << "checkpoint " << (out_dir / "model.vtck").string() << "\n";
  std::cout << "metrics " << (out_dir / "metrics.tsv").string() << "\n";
  return kExitOk;
}

struct EvalOutcome {
  eval::HnsReport report;
  double success_rate = 0.0;
};

EvalOutcome run_rollouts(const config::RunConfig& cfg, eval::ChunkPolicy& pol,
                         const eval::TaskScheme& scheme, ad::Index runs) {
  synth::WorldConfig wcfg = cfg.world_config();
  synth::ObsGeometry geom = cfg.obs_geometry();
  policy::ModelConfig mc = cfg.model_config();
  eval::RolloutConfig rcfg = cfg.rollout_config();
  eval::ScoreBands bands = cfg.score_bands();
  uint64_t seed = static_cast<uint64_t>(cfg.get_int("eval.seed"));

  std::vector<std::vector<double>> run_scores;
  int successes = 0;
  for (ad::Index i = 0; i < runs; ++i) {
    eval::EvalEnv env = eval::eval_env(wcfg, seed, i);
    eval::RolloutResult r =
        eval::rollout(pol, wcfg, geom, env.start, env.target, rcfg, mc.tactile_hist,
                      mc.proprio_hist, rng::mix_seed(seed, static_cast<uint64_t>(i)));
    successes += r.success ? 1 : 0;
    run_scores.push_back(eval::score_rollout(r, bands));
  }
  EvalOutcome out;
  out.report = eval::evaluate_runs(run_scores, scheme);
  out.success_rate = static_cast<double>(successes) / static_cast<double>(runs);
  return out;
}

eval::TaskScheme task_scheme(const config::RunConfig& cfg, const fs::path& schemes_dir) {
  return eval::load_scheme_for_task(schemes_dir, cfg.get("data.task"));
}

int cmd_eval(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir,
             const fs::path& schemes_dir, ad::Index runs, bool expert) {
  policy::ModelConfig mc = cfg.model_config();
  eval::TaskScheme scheme = task_scheme(cfg, schemes_dir);

  std::optional<policy::PolicyModel> model;
  std::optional<train::NormalizationStats> stats;
  std::unique_ptr<eval::ChunkPolicy> pol;
  if (expert) {
    pol = std::make_unique<eval::ExpertChunkPolicy>(mc.action_horizon, mc.proprio_dim());
  } else {
    policy::Checkpoint ckpt = policy::load_checkpoint(checkpoint);
    if (ckpt.model_digest != cfg.model_digest()) {
      std::cerr << "model digest mismatch: checkpoint " << hex_digest(ckpt.model_digest)
                << " vs config " << hex_digest(cfg.model_digest())
                << "; refusing to evaluate a checkpoint under a different model config\n";
      return kExitVerification;
    }
    model.emplace(mc, cfg.train_options().seed);
    policy::restore_params(model->params(), ckpt);
    stats = train::NormalizationStats::from_blobs(ckpt.arrays());
    policy::LatentMode mode = cfg.get("eval.latent") == "sampled"
                                  ? policy::LatentMode::SampledLatent
                                  : policy::LatentMode::ZeroLatent;
    pol = std::make_unique<eval::ModelChunkPolicy>(
        *model, *stats, mode, static_cast<uint64_t>(cfg.get_int("eval.seed")));
  }

  EvalOutcome outcome = run_rollouts(cfg, *pol, scheme, runs);
  fs::create_directories(out_dir);
  std::ofstream report_file(out_dir / "eval_report.tsv", std::ios::trunc);
  eval::write_report(report_file, outcome.report, cfg.digest());
  eval::write_report(std::cout, outcome.report, cfg.digest());
  std::cout << "closed_loop_success_rate " << outcome.success_rate << " over " << runs
            << " runs\n";
  return kExitOk;
}

int cmd_ablate(const config::RunConfig& base, const fs::path& out_dir,
               const fs::path& schemes_dir, ad::Index seeds) {
  fs::create_directories(out_dir);
  fs::path data_dir = out_dir / "data";
  synth::GeneratorConfig gen = base.generator_config();
  std::vector<synth::Episode> episodes = synth::generate_dataset(gen);
  synth::write_dataset(data_dir, episodes, base.digest());

  eval::TaskScheme scheme = task_scheme(base, schemes_dir);
  ad::Index runs = base.get_int("eval.runs");

  std::ofstream table(out_dir / "ablation.tsv", std::ios::trunc);
  table << "# config_digest=" << hex_digest(base.digest()) << "\n";
  table << "# dataset=" << (data_dir / "manifest.txt").string() << "\n";
  table << "# variant\tl_total\tl_kl\tl_ja\tl_tactile\tl_arm\tmean_hns\tsuccess_rate\n";

  uint64_t base_train_seed = static_cast<uint64_t>(base.get_int("train.seed"));
  for (policy::Variant v : policy::kVariantLadder) {
    double total = 0, kl = 0, ja = 0, tact = 0, arm = 0, hns_sum = 0, succ_sum = 0;
    for (ad::Index k = 0; k < seeds; ++k) {
      config::RunConfig cfg = base;
      cfg.set("model.variant", policy::variant_name(v));
      cfg.finalize();
      train::TrainOptions opts = cfg.train_options();
      opts.seed = base_train_seed + static_cast<uint64_t>(k);  // identical across variants
      opts.checkpoint_path.reset();
      opts.log_wall_ms = false;

      policy::PolicyModel model(cfg.model_config(), opts.seed);
      train::TrainResult result = train::train_policy(model, episodes, opts, nullptr);
      const train::EpochRow& last = result.rows.back();

      eval::ModelChunkPolicy pol(model, result.stats, policy::LatentMode::ZeroLatent,
                                 static_cast<uint64_t>(cfg.get_int("eval.seed")));
      EvalOutcome outcome = run_rollouts(cfg, pol, scheme, runs);

      total += last.total;
      kl += last.kl;
      ja += last.ja;
      tact += last.tactile;
      arm += last.arm;
      hns_sum += outcome.report.mean_hns;
      succ_sum += outcome.success_rate;
      std::cout << policy::variant_name(v) << " seed " << k << ": success "
                << outcome.success_rate << ", hns " << outcome.report.mean_hns << "\n";
    }
    double n = static_cast<double>(seeds);
    char row[256];
    std::snprintf(row, sizeof(row), "%s\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g\t%.4f\t%.3f\n",
                  policy::variant_name(v), total / n, kl / n, ja / n, tact / n, arm / n,
                  hns_sum / n, succ_sum / n);
    table << row;
    table.flush();
  }
  std::cout << "ablation table " << (out_dir / "ablation.tsv").string() << "\n";
  return kExitOk;
}

// Gradient verification over a fixed micro-configuration. Suites mirror the
// layer/fusion/loss/full-model split; each reports its worst relative error.
int cmd_gradcheck(const std::string& corrupt_op) {
  if (!corrupt_op.empty()) {
    static std::string held = corrupt_op;
    ad::Tape::corrupt_backward(held.c_str());
  }
  struct Suite {
    std::string name;
    double rtol;
    double worst;
  };
  std::vector<Suite> suites;
  const double eps = 1e-5;

  rng::Stream rs(20250801);
  auto random_tensor = [&](ad::Shape shape, double lo, double hi) {
    ad::Tensor t = ad::Tensor::zeros(shape);
    for (ad::Index i = 0; i < t.numel(); ++i) t.mutable_values()(i) = rs.uniform(lo, hi);
    return t;
  };

  {  // elementwise and normalization ops
    double worst = 0;
    ad::Tensor x = random_tensor({7}, -2, 2);
    ad::Tensor pos = random_tensor({7}, 0.5, 2);
    worst = std::max(worst, ad::finite_diff_check(
                                [](const ad::Tensor& t) { return ad::mean(ad::exp(t)); }, x, eps));
    worst = std::max(worst, ad::finite_diff_check(
                                [](const ad::Tensor& t) { return ad::mean(ad::tanh(t)); }, x, eps));
    worst = std::max(worst, ad::finite_diff_check(
                                [](const ad::Tensor& t) { return ad::mean(ad::gelu(t)); }, x, eps));
    worst = std::max(worst, ad::finite_diff_check(
                                [](const ad::Tensor& t) { return ad::mean(ad::ln(t)); }, pos, eps));
    worst = std::max(worst,
                     ad::finite_diff_check(
                         [](const ad::Tensor& t) { return ad::mean(ad::sqrt(t)); }, pos, eps));
    ad::Tensor v = random_tensor({6}, -1, 1);
    worst = std::max(worst, ad::finite_diff_check(
                                [&](const ad::Tensor& t) {
                                  return ad::sum(ad::mul(ad::softmax(t, 0), v));
                                },
                                random_tensor({6}, -2, 2), eps));
    ad::Tensor gain = random_tensor({8}, 0.5, 1.5);
    ad::Tensor bias = random_tensor({8}, -0.5, 0.5);
    worst = std::max(worst, ad::finite_diff_check(
                                [&](const ad::Tensor& t) {
                                  return ad::mean(ad::square(ad::layer_norm(t, gain, bias, 1e-5)));
                                },
                                random_tensor({3, 8}, -2, 2), eps));
    suites.push_back({"ops", 1e-4, worst});
  }

  nn::AttentionConfig attn{8, 2};
  {  // encoder/decoder layers
    nn::ParamStore store;
    nn::EncoderBlock b1(store, "b1", attn);
    nn::EncoderBlock b2(store, "b2", attn);
    nn::DecoderBlock dec(store, "dec", attn);
    store.init_uniform_fanin(1);
    ad::Tensor tokens = random_tensor({4, 8}, -1, 1);
    ad::Tensor memory = random_tensor({5, 8}, -1, 1);
    auto loss = [&]() {
      ad::Tensor enc = b2.forward(b1.forward(tokens, attn), attn);
      return ad::mean(ad::square(dec.forward(enc, memory, attn)));
    };
    std::vector<std::pair<std::string, ad::Index>> coords;
    for (const auto& [name, t] : store.entries()) {
      coords.emplace_back(name,
                          static_cast<ad::Index>(rs.below(static_cast<uint64_t>(t.numel()))));
    }
    suites.push_back({"layers", 1e-4, nn::params_finite_diff_check(loss, store, coords, eps)});
  }

  {  // cross-modal fusion
    nn::ParamStore store;
    fusion::FusionParams params(store, "fuse", attn);
    store.init_uniform_fanin(2);
    ad::Tensor visual = random_tensor({3, 8}, -1, 1);
    ad::Tensor tactile = random_tensor({2, 8}, -1, 1);
    auto loss = [&]() {
      return ad::mean(ad::square(fusion::cross_modal_fuse({visual, tactile}, params, attn)));
    };
    std::vector<std::pair<std::string, ad::Index>> coords;
    for (const auto& [name, t] : store.entries()) {
      coords.emplace_back(name,
                          static_cast<ad::Index>(rs.below(static_cast<uint64_t>(t.numel()))));
    }
    suites.push_back({"fusion", 1e-4, nn::params_finite_diff_check(loss, store, coords, eps)});
  }

  {  // loss functions
    double worst = 0;
    ad::Tensor mu = random_tensor({5}, -1, 1);
    ad::Tensor logvar = random_tensor({5}, -1, 1);
    worst = std::max(worst,
                     ad::finite_diff_check(
                         [&](const ad::Tensor& m) { return train::kl_diag_gaussian(m, logvar); },
                         mu, eps));
    ad::Tensor target = random_tensor({4, 6}, -1, 1);
    worst = std::max(worst, ad::finite_diff_check(
                                [&](const ad::Tensor& p) { return train::action_l1(p, target); },
                                random_tensor({4, 6}, -1, 1), eps));
    train::PlanarArmFk fk(3);
    train::ArmLayout layout = train::ArmLayout::from_groups({2, 1, 1, 1, 1}, fk.joint_count());
    ad::Tensor arm_target = random_tensor({3, 6}, -0.5, 0.5);
    worst = std::max(worst, ad::finite_diff_check(
                                [&](const ad::Tensor& p) {
                                  return train::arm_loss(p, arm_target, layout, fk, 1.0, 1.0);
                                },
                                random_tensor({3, 6}, -0.5, 0.5), eps));
    suites.push_back({"losses", 1e-4, worst});
  }

  {  // full model composite loss, 20 sampled parameters
    policy::ModelConfig mc;
    mc.views = {{8, 8, 1, 4}};
    mc.proprio_groups = {2, 1, 1, 1, 1};
    mc.proprio_hist = 2;
    mc.tactile_channels = 4;
    mc.tactile_hist = 3;
    mc.future_horizon = 2;
    mc.action_horizon = 4;
    mc.model_dim = 8;
    mc.n_heads = 2;
    mc.enc_layers = 1;
    mc.dec_layers = 1;
    mc.latent_dim = 4;
    mc.variant = policy::Variant::Full;
    policy::PolicyModel model(mc, 3);

    policy::TrainSample s;
    s.obs.views.push_back(random_tensor({64}, 0, 1));
    s.obs.tactile_window = random_tensor({3, 8}, -1, 1);
    s.obs.proprio_window = random_tensor({2, 6}, -1, 1);
    s.expert_actions = random_tensor({4, 6}, -1, 1);
    s.future_tactile = random_tensor({2, 8}, -1, 1);
    ad::Tensor noise = random_tensor({4}, -1, 1);

    train::NormalizationStats stats;
    stats.proprio = {ad::Array::Zero(6), ad::Array::Ones(6)};
    stats.action = {ad::Array::Zero(6), ad::Array::Ones(6)};
    stats.tactile_raw = {ad::Array::Zero(4), ad::Array::Ones(4)};
    stats.tactile_delta = {ad::Array::Zero(4), ad::Array::Ones(4)};
    train::LossWeights w;
    auto loss = [&]() {
      policy::ForwardResult fwd =
          model.forward_sample(s, policy::Phase::PredictedTactile, noise);
      return train::sample_losses(model, fwd, s, w, stats).total;
    };
    std::vector<std::pair<std::string, ad::Index>> coords;
    std::vector<std::string> names;
    for (const auto& [name, t] : model.params().entries()) names.push_back(name);
    for (int i = 0; i < 20; ++i) {
      const std::string& name = names[rs.below(names.size())];
      coords.emplace_back(
          name, static_cast<ad::Index>(
                    rs.below(static_cast<uint64_t>(model.params().at(name).numel()))));
    }
    suites.push_back(
        {"full_model", 1e-3, nn::params_finite_diff_check(loss, model.params(), coords, eps)});
  }

  ad::Tape::corrupt_backward(nullptr);

  bool all_ok = true;
  std::printf("gradient check (central differences, eps=%g)\n", eps);
  for (const Suite& s : suites) {
    bool ok = s.worst < s.rtol;
    all_ok = all_ok && ok;
    std::printf("[%s] suite %-10s worst_rel_err %.3e rtol %.0e\n", ok ? "PASS" : "FAIL",
                s.name.c_str(), s.worst, s.rtol);
  }
  if (!corrupt_op.empty()) {
    std::printf("backward rule for op '%s' was deliberately corrupted\n", corrupt_op.c_str());
  }
  return all_ok ? kExitOk : kExitVerification;
}

int cmd_hns(const fs::path& sheet_path, const std::string& task, const fs::path& schemes_dir,
            const fs::path& out_path) {
  eval::TaskScheme scheme = eval::load_scheme_for_task(schemes_dir, task);
  std::vector<eval::ScoreSheetRow> rows = eval::load_score_sheet(sheet_path);
  std::vector<std::vector<double>> run_scores;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].task != task) {
      throw eval::SchemeError("score sheet row " + std::to_string(i + 1) + " is for task '" +
                              rows[i].task + "', expected '" + task + "'");
    }
    run_scores.push_back(rows[i].scores);
  }
  eval::HnsReport report = eval::evaluate_runs(run_scores, scheme);
  eval::write_report(std::cout, report, 0);
  if (!out_path.empty()) {
    std::ofstream os(out_path, std::ios::trunc);
    eval::write_report(os, report, 0);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visuo-tactile policy workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;

  auto add_common = [&](CLI::App* cmd, bool with_out = true) {
    cmd->add_option("--config", config_path, "run configuration file (key=value lines)");
    if (with_out) cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "master seed override (data/train/eval)");
  };

  CLI::App* datagen = app.add_subcommand("datagen", "generate an expert demonstration dataset");
  add_common(datagen);

  CLI::App* train_cmd = app.add_subcommand("train", "train a policy on a dataset");
  std::string data_dir;
  add_common(train_cmd);
  train_cmd->add_option("--data", data_dir, "dataset directory (from datagen)")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "closed-loop evaluation of a checkpoint");
  std::string checkpoint_path;
  std::string schemes_dir = "data/schemes";
  long long runs_override = -1;
  bool expert = false;
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint file");
  eval_cmd->add_option("--schemes", schemes_dir, "task scheme directory");
  eval_cmd->add_option("--runs", runs_override, "number of rollouts (default from config)");
  eval_cmd->add_flag("--expert", expert, "evaluate the scripted expert instead of a checkpoint");

  CLI::App* ablate = app.add_subcommand("ablate", "train and evaluate the full variant ladder");
  long long seeds_override = -1;
  bool quick = false;
  add_common(ablate);
  ablate->add_option("--schemes", schemes_dir, "task scheme directory");
  ablate->add_option("--seeds", seeds_override, "seeds per variant (default from config)");
  ablate->add_flag("--quick", quick, "2-seed quick sweep");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string corrupt_op;
  add_common(gradcheck, false);
  gradcheck->add_option("--corrupt", corrupt_op,
                        "deliberately corrupt one op's backward rule (harness self-test)");

  CLI::App* hns_cmd = app.add_subcommand("hns", "score a plain-text score sheet");
  std::string sheet_path, task_name, hns_out;
  hns_cmd->add_option("--sheet", sheet_path, "score sheet: task then s_1..s_N per line")
      ->required();
  hns_cmd->add_option("--task", task_name, "task scheme name")->required();
  hns_cmd->add_option("--schemes", schemes_dir, "task scheme directory");
  hns_cmd->add_option("--out", hns_out, "also write the report to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (datagen->parsed()) {
      return cmd_datagen(load_config(config_path, seed), out_dir);
    }
    if (train_cmd->parsed()) {
      return cmd_train(load_config(config_path, seed), data_dir, out_dir);
    }
    if (eval_cmd->parsed()) {
      config::RunConfig cfg = load_config(config_path, seed);
      if (!expert && checkpoint_path.empty()) {
        throw config::ConfigError("eval needs --checkpoint (or --expert)");
      }
      ad::Index runs = runs_override > 0 ? runs_override : cfg.get_int("eval.runs");
      return cmd_eval(cfg, checkpoint_path, out_dir, schemes_dir, runs, expert);
    }
    if (ablate->parsed()) {
      config::RunConfig cfg = load_config(config_path, seed);
      ad::Index seeds =
          quick ? 2 : (seeds_override > 0 ? seeds_override : cfg.get_int("ablate.seeds"));
      return cmd_ablate(cfg, out_dir, schemes_dir, seeds);
    }
    if (gradcheck->parsed()) {
      return cmd_gradcheck(corrupt_op);
    }
    if (hns_cmd->parsed()) {
      return cmd_hns(sheet_path, task_name, schemes_dir, hns_out);
    }
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const eval::SchemeError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const synth::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ad::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ad::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

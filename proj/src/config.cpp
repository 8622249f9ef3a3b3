#include "vtp/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace vtp::config {

namespace {

const std::vector<KeyDoc> kRegistry = {
    {"scale", "desk", "shape preset: desk (synthetic-world dims) or paper (published dims)"},
    {"world.quantization", "0.25", "visual target cell size q; cameras only see the cell"},
    {"world.tolerance", "0.05", "success tolerance tau; must satisfy tau < q/2"},
    {"world.bump_sigma", "0.15", "tactile bump width"},
    {"world.bump_kappa", "0.9", "angular modulation strength in [0,1)"},
    {"world.max_step", "0.05", "largest effector move per frame"},
    {"world.fine_step", "0.02", "expert step size in the tactile fine phase"},
    {"world.align_radius", "0.125", "coarse-region radius that starts the fine phase"},
    {"world.contact_threshold", "0.5", "bump level that sets the contact flag"},
    {"world.min_start_separation", "0.25", "minimum start-to-target distance"},
    {"world.placement_margin", "0.08", "keep targets/starts this far from the walls"},
    {"world.noise_std", "0.0", "tactile sensor noise (off by default)"},
    {"world.horizon", "80", "episode and rollout step budget"},
    {"data.episodes", "50", "expert demonstrations to generate"},
    {"data.seed", "0", "dataset generation seed"},
    {"data.task", "synth_insertion", "task id recorded in episodes and reports"},
    {"obs.views", "16x16x1p4,16x16x1p4",
     "camera views as HxWxCpP (height, width, channels, patch), comma separated"},
    {"obs.proprio_groups", "2,1,1,1,1",
     "proprioception group extents [left arm, left hand, right arm, right hand, neck]"},
    {"obs.proprio_hist", "6", "proprioception history frames H_p"},
    {"obs.tactile_channels", "12", "raw tactile channels C; windows carry 2C with deltas"},
    {"obs.tactile_hist", "6", "tactile history frames H_t"},
    {"obs.future_horizon", "6", "forecast horizon H_f"},
    {"act.horizon", "16", "action chunk length H_a"},
    {"model.dim", "64", "token dimension D"},
    {"model.heads", "4", "attention heads"},
    {"model.enc_layers", "2", "style encoder depth"},
    {"model.dec_layers", "2", "decoder depth (both heads)"},
    {"model.latent_dim", "16", "style latent dimension Z"},
    {"model.variant", "full",
     "ablation ladder rung: without_touch, naive_touch, cross_attention, next_touch_pred, "
     "autoregressive, full"},
    {"model.share_fusion", "false", "share cross-attention fusion weights between the two sites"},
    {"train.epochs", "100", "training epochs"},
    {"train.batch", "8", "batch size (paper scale uses 128)"},
    {"train.lr", "0.001", "Adam learning rate (paper scale uses 1e-4)"},
    {"train.seed", "0", "training seed (shuffling, noise, init)"},
    {"train.switch_fraction", "0.75",
     "curriculum boundary: ground-truth tactile below ceil(fraction*epochs)"},
    {"train.w_kl", "10", "KL loss weight w1"},
    {"train.w_ja", "1", "joint-angle L1 weight w2"},
    {"train.w_tactile", "1", "future-tactile L1 weight w3"},
    {"train.w_arm", "1", "arm end-effector loss weight w4"},
    {"train.lambda_pos", "1", "position term inside the arm loss"},
    {"train.lambda_rot", "1", "rotation term inside the arm loss"},
    {"train.samples_per_episode", "4", "random timesteps drawn per episode per epoch"},
    {"train.checkpoint_every", "0", "also checkpoint every N epochs (0: final only)"},
    {"eval.runs", "10", "closed-loop rollouts per evaluation"},
    {"eval.seed", "1000", "evaluation environment seed"},
    {"eval.replan_every", "2", "steps between plan refreshes"},
    {"eval.blend_horizon", "1", "cross-fade frames between consecutive chunks"},
    {"eval.latent", "zero", "latent at inference: zero or sampled"},
    {"ablate.seeds", "5", "seeds per variant in the ablation sweep"},
};

// Shapes pinned by the published appendix when scale=paper.
const std::vector<std::pair<std::string, std::string>> kPaperShape = {
    {"obs.views", "180x320x3p20,180x320x3p20,256x280x3p8,256x280x3p8"},
    {"obs.proprio_groups", "7,17,7,17,2"},
    {"obs.proprio_hist", "6"},
    {"obs.tactile_channels", "60"},
    {"obs.tactile_hist", "18"},
    {"obs.future_horizon", "18"},
    {"act.horizon", "100"},
};

const std::vector<std::pair<std::string, std::string>> kPaperTraining = {
    {"train.batch", "128"},
    {"train.lr", "0.0001"},
};

bool model_digest_key(const std::string& key) {
  return key == "scale" || key.rfind("model.", 0) == 0 || key.rfind("obs.", 0) == 0 ||
         key.rfind("act.", 0) == 0;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::vector<ad::Index> parse_int_list(const std::string& text, const std::string& key) {
  std::vector<ad::Index> out;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    try {
      out.push_back(std::stoll(trim(tok)));
    } catch (const std::exception&) {
      throw ConfigError(key + ": cannot parse integer '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

}  // namespace

std::vector<policy::ViewSpec> parse_views(const std::string& text) {
  std::vector<policy::ViewSpec> views;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    long long h = 0, w = 0, c = 0, p = 0;
    if (std::sscanf(tok.c_str(), "%lldx%lldx%lldp%lld", &h, &w, &c, &p) != 4) {
      throw ConfigError("obs.views: want HxWxCpP, got '" + tok + "'");
    }
    views.push_back(policy::ViewSpec{static_cast<ad::Index>(h), static_cast<ad::Index>(w),
                                     static_cast<ad::Index>(c), static_cast<ad::Index>(p)});
  }
  if (views.empty()) throw ConfigError("obs.views: empty");
  return views;
}

const std::vector<KeyDoc>& RunConfig::registry() { return kRegistry; }

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  for (const KeyDoc& kd : kRegistry) cfg.values_[kd.key] = kd.default_value;
  cfg.finalize();
  return cfg;
}

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig cfg;
  for (const KeyDoc& kd : kRegistry) cfg.values_[kd.key] = kd.default_value;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  cfg.finalize();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_string(buf.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (values_.find(key) == values_.end()) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  values_[key] = value;
  explicit_.insert(key);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse number '" + get(key) + "'");
  }
}

long long RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse integer '" + get(key) + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": cannot parse boolean '" + v + "'");
}

void RunConfig::finalize() {
  const std::string& scale = get("scale");
  if (scale != "desk" && scale != "paper") {
    throw ConfigError("scale must be 'desk' or 'paper', got '" + scale + "'");
  }
  if (scale == "paper") {
    for (const auto& [key, pinned] : kPaperShape) {
      if (explicit_.count(key) > 0 && values_[key] != pinned) {
        throw ConfigError("paper scale fixes " + key + "=" + pinned + "; config declares '" +
                          values_[key] + "'");
      }
      values_[key] = pinned;
    }
    for (const auto& [key, pinned] : kPaperTraining) {
      if (explicit_.count(key) == 0) values_[key] = pinned;
    }
  }
  // constructing the typed configs runs their own validation
  policy::ModelConfig mc = model_config();
  mc.validate();
  world_config().validate();
  train_options().weights.validate();
  if (get_int("eval.replan_every") < 1 ||
      get_int("eval.replan_every") > static_cast<long long>(mc.action_horizon)) {
    throw ConfigError("eval.replan_every must lie in [1, act.horizon]");
  }
  if (get_int("eval.blend_horizon") < 0 ||
      get_int("eval.blend_horizon") > static_cast<long long>(mc.action_horizon)) {
    throw ConfigError("eval.blend_horizon must lie in [0, act.horizon]");
  }
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << '=' << value << '\n';
  return os.str();
}

uint64_t RunConfig::digest() const { return rng::fnv1a64(canonical()); }

uint64_t RunConfig::model_digest() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) {
    if (model_digest_key(key)) os << key << '=' << value << '\n';
  }
  return rng::fnv1a64(os.str());
}

policy::ModelConfig RunConfig::model_config() const {
  policy::ModelConfig mc;
  mc.views = parse_views(get("obs.views"));
  mc.proprio_groups = parse_int_list(get("obs.proprio_groups"), "obs.proprio_groups");
  mc.proprio_hist = get_int("obs.proprio_hist");
  mc.tactile_channels = get_int("obs.tactile_channels");
  mc.tactile_hist = get_int("obs.tactile_hist");
  mc.future_horizon = get_int("obs.future_horizon");
  mc.action_horizon = get_int("act.horizon");
  mc.model_dim = get_int("model.dim");
  mc.n_heads = get_int("model.heads");
  mc.enc_layers = get_int("model.enc_layers");
  mc.dec_layers = get_int("model.dec_layers");
  mc.latent_dim = get_int("model.latent_dim");
  mc.variant = policy::variant_from_name(get("model.variant"));
  mc.share_fusion = get_bool("model.share_fusion");
  return mc;
}

synth::WorldConfig RunConfig::world_config() const {
  synth::WorldConfig w;
  w.quantization = get_double("world.quantization");
  w.tolerance = get_double("world.tolerance");
  w.bump_sigma = get_double("world.bump_sigma");
  w.bump_kappa = get_double("world.bump_kappa");
  w.max_step = get_double("world.max_step");
  w.fine_step = get_double("world.fine_step");
  w.align_radius = get_double("world.align_radius");
  w.contact_threshold = get_double("world.contact_threshold");
  w.min_start_separation = get_double("world.min_start_separation");
  w.placement_margin = get_double("world.placement_margin");
  w.noise_std = get_double("world.noise_std");
  w.horizon = get_int("world.horizon");
  w.tactile_channels = get_int("obs.tactile_channels");
  return w;
}

synth::ObsGeometry RunConfig::obs_geometry() const {
  synth::ObsGeometry geom;
  geom.views.clear();
  std::vector<policy::ViewSpec> views = parse_views(get("obs.views"));
  for (size_t i = 0; i < views.size(); ++i) {
    // view kind alternates overhead / effector-zoom
    geom.views.push_back(synth::ViewGeometry{views[i].height, views[i].width,
                                             views[i].channels,
                                             static_cast<ad::Index>(i % 2)});
  }
  geom.proprio_groups = parse_int_list(get("obs.proprio_groups"), "obs.proprio_groups");
  return geom;
}

synth::GeneratorConfig RunConfig::generator_config() const {
  synth::GeneratorConfig gen;
  gen.world = world_config();
  gen.geometry = obs_geometry();
  gen.episodes = get_int("data.episodes");
  gen.seed = static_cast<uint64_t>(get_int("data.seed"));
  gen.task_id = get("data.task");
  return gen;
}

train::TrainOptions RunConfig::train_options() const {
  train::TrainOptions opts;
  opts.epochs = get_int("train.epochs");
  opts.batch_size = get_int("train.batch");
  opts.switch_fraction = get_double("train.switch_fraction");
  opts.lr = get_double("train.lr");
  opts.seed = static_cast<uint64_t>(get_int("train.seed"));
  opts.weights.w_kl = get_double("train.w_kl");
  opts.weights.w_ja = get_double("train.w_ja");
  opts.weights.w_tactile = get_double("train.w_tactile");
  opts.weights.w_arm = get_double("train.w_arm");
  opts.weights.lambda_pos = get_double("train.lambda_pos");
  opts.weights.lambda_rot = get_double("train.lambda_rot");
  opts.samples_per_episode = get_int("train.samples_per_episode");
  opts.checkpoint_every = get_int("train.checkpoint_every");
  opts.config_digest = digest();
  opts.model_digest = model_digest();
  return opts;
}

eval::RolloutConfig RunConfig::rollout_config() const {
  eval::RolloutConfig r;
  r.horizon = get_int("world.horizon");
  r.replan_every = get_int("eval.replan_every");
  r.blend_horizon = get_int("eval.blend_horizon");
  return r;
}

eval::ScoreBands RunConfig::score_bands() const {
  return {get_double("world.align_radius"), get_double("world.tolerance")};
}

void RunConfig::override_seed(uint64_t seed) {
  values_["data.seed"] = std::to_string(seed);
  values_["train.seed"] = std::to_string(seed);
  values_["eval.seed"] = std::to_string(seed + 1000);
}

}  // namespace vtp::config

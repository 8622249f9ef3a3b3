#pragma once

// Flat key=value run configuration. Every knob of every module lives here;
// unknown keys are rejected against a registry, and the content digest is
// taken over the canonicalized (sorted) document so key order never
// matters. The model digest covers only the structure-bearing subset and
// gates checkpoint/eval compatibility.

#include "vtp/policy.hpp"
#include "vtp/rollout_eval.hpp"
#include "vtp/synthworld.hpp"
#include "vtp/trainer.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace vtp::config {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string doc;
};

class RunConfig {
 public:
  static const std::vector<KeyDoc>& registry();
  static RunConfig defaults();
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // Applies the scale preset (paper scale pins the published shapes and
  // rejects conflicting explicit keys) and validates cross-cutting
  // constraints. from_file/from_string call this.
  void finalize();

  std::string canonical() const;
  uint64_t digest() const;
  uint64_t model_digest() const;

  policy::ModelConfig model_config() const;
  synth::WorldConfig world_config() const;
  synth::ObsGeometry obs_geometry() const;
  synth::GeneratorConfig generator_config() const;
  train::TrainOptions train_options() const;
  eval::RolloutConfig rollout_config() const;
  eval::ScoreBands score_bands() const;

  // Master-seed override for the --seed flag: resets data/train/eval seeds.
  void override_seed(uint64_t seed);

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

std::vector<policy::ViewSpec> parse_views(const std::string& text);

}  // namespace vtp::config

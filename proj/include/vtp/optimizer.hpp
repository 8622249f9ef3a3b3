#pragma once

// Adam with bias correction over a ParamStore. Moment arrays are keyed by
// parameter name; a step with identical (params, grads, state) is a pure
// function, which the determinism tests rely on.

#include "vtp/nn.hpp"
#include "vtp/tensor.hpp"

#include <map>
#include <string>

namespace vtp::train {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  // Applies one update from the accumulated grads. Parameters with no grad
  // (never touched this step) are treated as zero-gradient. A non-finite
  // gradient aborts with the parameter's name.
  void step(nn::ParamStore& params);

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::map<std::string, ad::Array> m_, v_;
};

}  // namespace vtp::train

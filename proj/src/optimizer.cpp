#include "vtp/optimizer.hpp"

#include <cmath>

namespace vtp::train {

void Adam::step(nn::ParamStore& params) {
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& [name, t] : params.entries()) {
    ad::Array grad =
        t.has_grad() ? t.grad() : ad::Array(ad::Array::Zero(t.numel()));
    if (!grad.isFinite().all()) {
      throw ad::NumericError("adam: non-finite gradient in parameter " + name);
    }
    auto [mit, inserted_m] = m_.try_emplace(name, ad::Array::Zero(t.numel()));
    auto [vit, inserted_v] = v_.try_emplace(name, ad::Array::Zero(t.numel()));
    ad::Array& m = mit->second;
    ad::Array& v = vit->second;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.square();
    ad::Array mhat = m / bc1;
    ad::Array vhat = v / bc2;
    t.mutable_values() -= cfg_.lr * mhat / (vhat.sqrt() + cfg_.eps);
  }
}

}  // namespace vtp::train

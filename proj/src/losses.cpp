#include "vtp/losses.hpp"

#include <cmath>
#include <string>

namespace vtp::train {

void LossWeights::validate() const {
  for (double w : {w_kl, w_ja, w_tactile, w_arm, lambda_pos, lambda_rot}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ad::DomainError("loss weights must be finite and nonnegative");
    }
  }
}

Tensor kl_diag_gaussian(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape()) {
    throw ad::ShapeError("kl: mu " + ad::shape_str(mu.shape()) + " vs logvar " +
                         ad::shape_str(logvar.shape()));
  }
  Tensor term = ad::sub(ad::sub(ad::add(ad::exp(logvar), ad::square(mu)), 1.0), logvar);
  if (mu.rank() == 2) {
    Tensor per_row = ad::reduce_axis(ad::Reduce::Sum, term, 1);
    return ad::mul(ad::mean(per_row), 0.5);
  }
  return ad::mul(ad::sum(term), 0.5);
}

namespace {

Tensor mean_abs_error(const char* what, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ad::ShapeError(std::string(what) + ": shape mismatch " + ad::shape_str(pred.shape()) +
                         " vs " + ad::shape_str(target.shape()));
  }
  return ad::mean(ad::abs(ad::sub(pred, target)));
}

}  // namespace

Tensor action_l1(const Tensor& pred, const Tensor& target) {
  return mean_abs_error("action_l1", pred, target);
}

Tensor tactile_l1(const Tensor& pred, const Tensor& target) {
  return mean_abs_error("tactile_l1", pred, target);
}

PlanarArmFk::PlanarArmFk(Index n_links, double joint_limit)
    : n_links_(n_links), joint_limit_(joint_limit) {
  if (n_links < 1 || n_links > 3) throw ad::DomainError("planar fk: 1..3 links supported");
}

std::pair<Tensor, Tensor> PlanarArmFk::pose(const Tensor& joints) const {
  if (joints.rank() != 2 || joints.shape()[1] < 1 || joints.shape()[1] > n_links_) {
    throw ad::ShapeError("planar fk: want [frames,1.." + std::to_string(n_links_) + "], got " +
                         ad::shape_str(joints.shape()));
  }
  Index links = joints.shape()[1];
  for (Index i = 0; i < joints.numel(); ++i) {
    double v = joints.at(i);
    if (!(std::abs(v) <= joint_limit_)) {
      throw ad::DomainError("planar fk: joint value " + std::to_string(v) +
                            " outside limit +/-" + std::to_string(joint_limit_) +
                            " at frame " + std::to_string(i / links) + " joint " +
                            std::to_string(i % links));
    }
  }
  Index frames = joints.shape()[0];
  // cumulative link angles, each [frames, 1]
  std::vector<Tensor> cum;
  for (Index j = 0; j < links; ++j) {
    Tensor angle = ad::slice(joints, 1, j, j + 1);
    cum.push_back(j == 0 ? angle : ad::add(cum.back(), angle));
  }
  Tensor x = ad::cos(cum[0]);
  Tensor y = ad::sin(cum[0]);
  for (Index j = 1; j < links; ++j) {
    x = ad::add(x, ad::cos(cum[j]));
    y = ad::add(y, ad::sin(cum[j]));
  }
  Tensor zeros = Tensor::zeros({frames, 1});
  Tensor position = ad::concat(1, {x, y, zeros});
  Tensor rotation = ad::concat(1, {zeros, zeros, cum.back()});
  return {position, rotation};
}

ArmLayout ArmLayout::from_groups(const std::vector<Index>& groups, Index max_joints) {
  ArmLayout layout;
  Index offset = 0;
  for (size_t g = 0; g < groups.size(); ++g) {
    if (g == 0 || g == 2) {
      layout.arms.emplace_back(offset, std::min(groups[g], max_joints));
    }
    offset += groups[g];
  }
  return layout;
}

Tensor arm_loss(const Tensor& pred, const Tensor& target, const ArmLayout& layout,
                const ForwardKinematics& fk, double lambda_pos, double lambda_rot) {
  if (pred.shape() != target.shape() || pred.rank() != 2) {
    throw ad::ShapeError("arm_loss: chunks must share a rank-2 shape");
  }
  if (layout.arms.empty()) throw ad::ShapeError("arm_loss: no arm groups in layout");
  Tensor pos_sq, rot_abs;
  bool first = true;
  for (auto [col, joints] : layout.arms) {
    Index n = std::min<Index>(joints, fk.joint_count());
    Tensor pj = ad::slice(pred, 1, col, col + n);
    Tensor tj = ad::slice(target, 1, col, col + n);
    auto [pred_pos, pred_rot] = fk.pose(pj);
    auto [tgt_pos, tgt_rot] = fk.pose(tj);
    Tensor dp = ad::reduce_axis(ad::Reduce::Sum, ad::square(ad::sub(pred_pos, tgt_pos)), 1);
    Tensor dr = ad::reduce_axis(ad::Reduce::Sum, ad::abs(ad::sub(pred_rot, tgt_rot)), 1);
    pos_sq = first ? dp : ad::concat(0, {pos_sq, dp});
    rot_abs = first ? dr : ad::concat(0, {rot_abs, dr});
    first = false;
  }
  return ad::add(ad::mul(ad::mean(pos_sq), lambda_pos), ad::mul(ad::mean(rot_abs), lambda_rot));
}

Tensor composite_loss(const LossBundle& parts, const LossWeights& weights) {
  weights.validate();
  Tensor total = ad::add(ad::mul(parts.kl, weights.w_kl), ad::mul(parts.ja, weights.w_ja));
  if (parts.has_tactile) total = ad::add(total, ad::mul(parts.tactile, weights.w_tactile));
  if (parts.has_arm) total = ad::add(total, ad::mul(parts.arm, weights.w_arm));
  return total;
}

}  // namespace vtp::train

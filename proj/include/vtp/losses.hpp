#pragma once

// Training losses: KL against the standard normal for the style latent,
// L1 on action chunks and forecast tactile windows, and the auxiliary arm
// end-effector loss (squared-position + absolute-rotation through a
// differentiable forward-kinematics map). composite() forms the weighted
// sum in a fixed association order so the reported total always equals the
// recomputed weighted sum bit-for-bit.

#include "vtp/tensor.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace vtp::train {

using ad::Index;
using ad::Tensor;

struct LossWeights {
  double w_kl = 10.0;
  double w_ja = 1.0;
  double w_tactile = 1.0;
  double w_arm = 1.0;
  double lambda_pos = 1.0;
  double lambda_rot = 1.0;

  void validate() const;
};

// 0.5 * sum(exp(logvar) + mu^2 - 1 - logvar); rank-2 inputs are treated as a
// batch: per-row sums, then the batch mean.
Tensor kl_diag_gaussian(const Tensor& mu, const Tensor& logvar);

// Mean absolute error over all entries.
Tensor action_l1(const Tensor& pred, const Tensor& target);
Tensor tactile_l1(const Tensor& pred, const Tensor& target);

// Joint angles for one arm -> (position [3], axis-angle rotation [3]).
class ForwardKinematics {
 public:
  virtual ~ForwardKinematics() = default;
  // Maximum number of leading arm joints the map consumes.
  virtual Index joint_count() const = 0;
  virtual double joint_limit() const = 0;
  // joints: [n_frames, n] with 1 <= n <= joint_count(); returns (positions
  // [n_frames,3], rotations [n_frames,3]); built from autodiff ops.
  virtual std::pair<Tensor, Tensor> pose(const Tensor& joints) const = 0;
};

// Planar chain of 1..3 unit links in the xy plane driven by the first
// joint_count angles of an arm group; rotation is the accumulated angle
// about z. Stands in for the real 7-DoF chain at desk scale.
class PlanarArmFk : public ForwardKinematics {
 public:
  explicit PlanarArmFk(Index n_links, double joint_limit = 6.283185307179586);
  Index joint_count() const override { return n_links_; }
  double joint_limit() const override { return joint_limit_; }
  std::pair<Tensor, Tensor> pose(const Tensor& joints) const override;

 private:
  Index n_links_;
  double joint_limit_;
};

// Column spans of the arm groups inside an action/proprio row.
struct ArmLayout {
  std::vector<std::pair<Index, Index>> arms;  // (first column, joint count)

  // Arms are the first and (when present) third proprio groups.
  static ArmLayout from_groups(const std::vector<Index>& groups, Index max_joints);
};

// lambda_pos * mean squared end-effector position error
//   + lambda_rot * mean absolute end-effector rotation error,
// averaged over frames and arms. Joint-limit violations on either operand
// raise DomainError (reported, never clamped).
Tensor arm_loss(const Tensor& pred, const Tensor& target, const ArmLayout& layout,
                const ForwardKinematics& fk, double lambda_pos, double lambda_rot);

struct LossBundle {
  Tensor kl, ja, tactile, arm, total;
  bool has_tactile = false;
  bool has_arm = false;

  double kl_value() const { return kl.value(); }
  double ja_value() const { return ja.value(); }
  double tactile_value() const { return has_tactile ? tactile.value() : 0.0; }
  double arm_value() const { return has_arm ? arm.value() : 0.0; }
  double total_value() const { return total.value(); }
};

// total = ((w1*kl + w2*ja) + w3*tactile) + w4*arm, absent parts contribute 0.
Tensor composite_loss(const LossBundle& parts, const LossWeights& weights);

}  // namespace vtp::train

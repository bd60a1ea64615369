#pragma once

#include <span>
#include <string>

#include <Eigen/Core>

#include "gripcvae/hand_model.hpp"

namespace gripcvae {

/// Pairwise thresholds (mm) and weights of the keypoint self-collision score.
struct CollisionPolicy {
  Eigen::MatrixXd delta;
  Eigen::MatrixXd mu;

  std::size_t size() const { return static_cast<std::size_t>(delta.rows()); }
};

/// delta(i,j) = r_i + r_j with r the link radius; mu = 1 except on the
/// diagonal and for parent/child link pairs.
CollisionPolicy default_collision_policy(const HandModel& model);

/// Applies a JSON override on top of the model defaults. Accepted keys:
/// "delta"/"mu" (full L x L matrices) and "pairs" (list of
/// {"a": link, "b": link, "delta": mm, "mu": w}).
CollisionPolicy load_collision_policy(const HandModel& model, const std::string& json_text);

/// Throws ValidationError unless both matrices are square, symmetric, the same
/// size, and delta is non-negative.
void validate_policy(const CollisionPolicy& policy);

/// f = sum_i sum_j mu_ij * max(delta_ij - |k_i - k_j|, 0), over the full
/// double sum (each unordered pair counts twice for symmetric mu).
double self_collision_score(std::span<const Vec3> keypoints, const CollisionPolicy& policy);

/// True when the score is exactly zero.
bool is_valid(const HandModel& model, const JointConfig& q, const CollisionPolicy& policy);

}  // namespace gripcvae

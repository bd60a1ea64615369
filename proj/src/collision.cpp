#include "gripcvae/collision.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "gripcvae/errors.hpp"

namespace gripcvae {

using nlohmann::json;

CollisionPolicy default_collision_policy(const HandModel& model) {
  const auto n = static_cast<Eigen::Index>(model.link_count());
  CollisionPolicy policy{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Ones(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      policy.delta(i, j) = link_radius(model.links[i].geometry) + link_radius(model.links[j].geometry);
    policy.mu(i, i) = 0.0;
  }
  for (const Joint& joint : model.joints) {
    const auto p = static_cast<Eigen::Index>(joint.parent_link);
    const auto c = static_cast<Eigen::Index>(joint.child_link);
    policy.mu(p, c) = 0.0;
    policy.mu(c, p) = 0.0;
  }
  return policy;
}

void validate_policy(const CollisionPolicy& policy) {
  const auto& d = policy.delta;
  const auto& m = policy.mu;
  if (d.rows() != d.cols() || m.rows() != m.cols() || d.rows() != m.rows())
    throw ValidationError("collision policy matrices must be square and the same size");
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (!(d(i, j) >= 0.0)) throw ValidationError("collision policy: negative delta");
      if (d(i, j) != d(j, i) || m(i, j) != m(j, i))
        throw ValidationError("collision policy: matrices must be symmetric");
    }
  }
}

CollisionPolicy load_collision_policy(const HandModel& model, const std::string& json_text) {
  CollisionPolicy policy = default_collision_policy(model);
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("collision policy: ") + e.what());
  }
  const auto n = static_cast<Eigen::Index>(model.link_count());
  auto read_matrix = [&](const char* key, Eigen::MatrixXd& out) {
    if (!j.contains(key)) return;
    const json& rows = j[key];
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n)
      throw DimensionError(std::string("collision policy: '") + key + "' must have " +
                           std::to_string(n) + " rows");
    for (Eigen::Index r = 0; r < n; ++r) {
      const json& row = rows[r];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
        throw DimensionError(std::string("collision policy: '") + key + "' row " + std::to_string(r) +
                             " must have " + std::to_string(n) + " entries");
      for (Eigen::Index c = 0; c < n; ++c) out(r, c) = row[c].get<double>();
    }
  };
  read_matrix("delta", policy.delta);
  read_matrix("mu", policy.mu);
  if (j.contains("pairs")) {
    for (const json& pair : j["pairs"]) {
      const auto a = static_cast<Eigen::Index>(model.link_index(pair.at("a").get<std::string>()));
      const auto b = static_cast<Eigen::Index>(model.link_index(pair.at("b").get<std::string>()));
      if (pair.contains("delta")) policy.delta(a, b) = policy.delta(b, a) = pair["delta"].get<double>();
      if (pair.contains("mu")) policy.mu(a, b) = policy.mu(b, a) = pair["mu"].get<double>();
    }
  }
  validate_policy(policy);
  return policy;
}

double self_collision_score(std::span<const Vec3> keypoints, const CollisionPolicy& policy) {
  const auto n = static_cast<Eigen::Index>(keypoints.size());
  if (policy.delta.rows() != n || policy.delta.cols() != n || policy.mu.rows() != n ||
      policy.mu.cols() != n)
    throw DimensionError("collision policy is " + std::to_string(policy.delta.rows()) + "x" +
                         std::to_string(policy.delta.cols()) + " but there are " + std::to_string(n) +
                         " keypoints");
  double f = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double mu = policy.mu(i, j);
      if (mu == 0.0) continue;
      const double gap = policy.delta(i, j) - (keypoints[i] - keypoints[j]).norm();
      f += mu * std::max(gap, 0.0);
    }
  }
  return f;
}

bool is_valid(const HandModel& model, const JointConfig& q, const CollisionPolicy& policy) {
  const auto keypoints = link_keypoints(model, q);
  return self_collision_score(keypoints, policy) == 0.0;
}

}  // namespace gripcvae

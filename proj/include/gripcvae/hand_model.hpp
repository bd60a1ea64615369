#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gripcvae/geometry.hpp"
#include "gripcvae/primitives.hpp"

namespace gripcvae {

inline constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

struct Link {
  std::string name;
  Geometry geometry;
  /// Offset of the geometry frame from the link's joint frame (the URDF
  /// collision origin). Keypoints and inner points live in the geometry frame.
  Pose local;
  Vec3 inner_point = Vec3::Zero();
  Vec3 keypoint = Vec3::Zero();
  double surface_area = 0.0;
};

/// Revolute joint. Limits are in radians.
struct Joint {
  std::string name;
  std::size_t parent_link = 0;
  std::size_t child_link = 0;
  Pose origin;
  Vec3 axis = Vec3::UnitX();
  double limit_lo = 0.0;
  double limit_hi = 0.0;

  double range() const { return limit_hi - limit_lo; }
};

class HandModel {
 public:
  std::string name;
  std::vector<Link> links;
  std::vector<Joint> joints;
  std::size_t palm_link = 0;
  Vec3 palm_normal = Vec3::UnitZ();
  RigidTransform root_transform;

  std::size_t joint_count() const { return joints.size(); }
  std::size_t link_count() const { return links.size(); }

  /// Index of the joint whose child is `link`, or kNoParent for the palm.
  std::size_t parent_joint(std::size_t link) const { return parent_joint_[link]; }
  /// Links ordered so that every parent precedes its children.
  const std::vector<std::size_t>& topological_order() const { return order_; }
  /// Joints between the palm and `link`, root first.
  std::vector<std::size_t> ancestor_joints(std::size_t link) const;
  /// Links whose pose depends on `joint` (the joint's child and its descendants).
  std::vector<std::size_t> subtree_links(std::size_t joint) const;
  /// Joints grouped by the palm child they hang from, i.e. one group per finger.
  std::vector<std::vector<std::size_t>> chains() const;
  /// Name of the first link of each chain, same order as chains().
  std::vector<std::string> chain_names() const;

  std::size_t link_index(const std::string& link_name) const;

  /// Checks the tree structure and every invariant, recomputes keypoints and
  /// surface areas, and builds the traversal caches. Throws ValidationError.
  void finalize();

 private:
  std::vector<std::size_t> parent_joint_;
  std::vector<std::size_t> order_;
};

/// Joint values normalized to [0, 1] against each joint's limits.
class JointConfig {
 public:
  JointConfig() = default;
  explicit JointConfig(std::vector<double> normalized);

  static JointConfig from_radians(const HandModel& model, std::span<const double> radians);
  /// All joints at 0 rad. Requires 0 to lie within every joint's limits.
  static JointConfig nominal(const HandModel& model);

  std::vector<double> radians(const HandModel& model) const;
  const std::vector<double>& normalized() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const JointConfig&) const = default;

 private:
  std::vector<double> values_;
};

double denormalize(const Joint& joint, double normalized);
double normalize(const Joint& joint, double radians);

/// Parses the URDF subset plus the `.hand.json` annotation sidecar.
HandModel parse_hand(const std::string& urdf_text, const std::string& annotations_text);

/// Reads `<path>` and its sidecar (`foo.urdf` -> `foo.hand.json` unless given).
HandModel load_hand(const std::string& urdf_path, const std::string& annotations_path = {});
std::string default_annotations_path(const std::string& urdf_path);

std::string to_urdf(const HandModel& model);
std::string to_annotations_json(const HandModel& model);

/// World transform of every link's geometry frame, same order as model.links.
std::vector<RigidTransform> forward_kinematics(const HandModel& model, const JointConfig& q);
std::vector<RigidTransform> forward_kinematics_radians(const HandModel& model,
                                                       std::span<const double> radians);

/// World position of every link's keypoint (mm).
std::vector<Vec3> link_keypoints(const HandModel& model, const JointConfig& q);
std::vector<Vec3> keypoints_from_transforms(const HandModel& model,
                                            std::span<const RigidTransform> transforms);

/// Structural equality with exact floating point comparison.
bool same_structure(const HandModel& a, const HandModel& b);

}  // namespace gripcvae

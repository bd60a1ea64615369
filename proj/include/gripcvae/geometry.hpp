#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gripcvae {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Proper rigid motion. Translations are in millimetres.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }
  RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
};

/// URDF roll-pitch-yaw: R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 rpy_to_matrix(const Vec3& rpy);

/// Rotation by `angle` radians about the unit vector `axis`.
Mat3 axis_angle(const Vec3& axis, double angle);

/// Origin element of a URDF joint or collision block. Kept in its textual
/// xyz/rpy form so that serialization reproduces the input exactly.
struct Pose {
  Vec3 xyz = Vec3::Zero();
  Vec3 rpy = Vec3::Zero();

  RigidTransform transform() const { return {rpy_to_matrix(rpy), xyz}; }
  bool operator==(const Pose& o) const { return xyz == o.xyz && rpy == o.rpy; }
};

}  // namespace gripcvae

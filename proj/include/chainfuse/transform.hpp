#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

namespace chainfuse {

/// Rigid-body transform as unit quaternion plus translation (meters).
/// The rotation is renormalized after every composition so that drift stays
/// bounded over arbitrarily long kinematic chains.
struct RigidTransform {
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d translation{0.0, 0.0, 0.0};

  static RigidTransform identity() { return {}; }

  /// xyz translation plus extrinsic x-y-z Euler rotation (URDF rpy).
  static RigidTransform from_xyz_rpy(const Eigen::Vector3d& xyz,
                                     const Eigen::Vector3d& rpy) {
    RigidTransform t;
    t.rotation = Eigen::Quaterniond(
        Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
        Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
        Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()));
    t.translation = xyz;
    return t;
  }

  static RigidTransform rotation_about(const Eigen::Vector3d& axis, double angle) {
    RigidTransform t;
    t.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis));
    return t;
  }

  static RigidTransform translation_of(const Eigen::Vector3d& xyz) {
    RigidTransform t;
    t.translation = xyz;
    return t;
  }

  RigidTransform operator*(const RigidTransform& o) const {
    RigidTransform r;
    r.rotation = rotation * o.rotation;
    r.rotation.normalize();
    r.translation = translation + rotation * o.translation;
    return r;
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  RigidTransform inverse() const {
    RigidTransform r;
    r.rotation = rotation.conjugate();
    r.translation = -(r.rotation * translation);
    return r;
  }

  /// Geodesic rotation distance to another transform, in [0, pi]:
  /// 2 acos(|<q1,q2>|), evaluated in atan2 form which stays well conditioned
  /// near zero.
  double rotation_angle_to(const RigidTransform& o) const {
    const Eigen::Quaterniond rel = rotation.conjugate() * o.rotation;
    return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
  }

  Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }
};

}  // namespace chainfuse

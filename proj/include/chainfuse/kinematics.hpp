#pragma once

#include <vector>

#include <Eigen/Dense>

#include "chainfuse/model.hpp"
#include "chainfuse/transform.hpp"

namespace chainfuse {

inline RigidTransform joint_motion(const JointSpec& j, double value) {
  if (joint_is_prismatic(j.kind))
    return RigidTransform::translation_of(j.axis * value);
  return RigidTransform::rotation_about(j.axis, value);
}

/// World-frame pose of every link, indexed by model link index. Pure
/// function of (model, angles); composes transforms in joint order.
inline std::vector<RigidTransform> forward_kinematics(const KinematicModel& m,
                                                      const JointVector& angles) {
  if (angles.values.size() != m.joint_count())
    throw ModelError(ModelError::Code::LengthMismatch,
                     "joint vector length " + std::to_string(angles.values.size()) +
                         " != joint count " + std::to_string(m.joint_count()));
  if (!angles.values.allFinite())
    throw ModelError(ModelError::Code::BadDocument, "non-finite joint value");

  std::vector<RigidTransform> poses(m.link_count());
  poses[m.base_link()] = RigidTransform::identity();
  const auto& joints = m.joints();
  for (int k = 0; k < m.joint_count(); ++k) {
    poses[m.joint_child_link(k)] =
        poses[m.joint_parent_link(k)] * joints[k].origin * joint_motion(joints[k], angles.values[k]);
  }
  return poses;
}

inline RigidTransform link_pose(const KinematicModel& m, const JointVector& angles,
                                const std::string& link) {
  return forward_kinematics(m, angles)[m.link_index(link)];
}

/// End-effector pose expressed in the camera frame:
/// inverse(camera pose) o end-effector pose.
inline RigidTransform end_effector_in_camera(const KinematicModel& m,
                                             const JointVector& angles) {
  const auto poses = forward_kinematics(m, angles);
  return poses[m.camera_link()].inverse() * poses[m.end_effector_link()];
}

/// Analytic Jacobian of the world-frame end-effector position with respect to
/// each joint value: axis cross moment-arm for revolute joints, world axis
/// for prismatic ones. 3 x n.
inline Eigen::Matrix3Xd end_effector_position_jacobian(const KinematicModel& m,
                                                       const JointVector& angles) {
  const auto poses = forward_kinematics(m, angles);
  const Eigen::Vector3d p_ee = poses[m.end_effector_link()].translation;
  Eigen::Matrix3Xd jac(3, m.joint_count());
  jac.setZero();
  const auto& joints = m.joints();
  // only joints on the chain from base to the end effector contribute
  std::vector<char> on_chain(m.link_count(), 0);
  {
    std::vector<int> parent_joint(m.link_count(), -1);
    for (int k = 0; k < m.joint_count(); ++k) parent_joint[m.joint_child_link(k)] = k;
    int link = m.end_effector_link();
    while (link != m.base_link()) {
      on_chain[link] = 1;
      link = m.joint_parent_link(parent_joint[link]);
    }
  }
  for (int k = 0; k < m.joint_count(); ++k) {
    if (!on_chain[m.joint_child_link(k)]) continue;
    const RigidTransform frame = poses[m.joint_parent_link(k)] * joints[k].origin;
    const Eigen::Vector3d axis_w = frame.rotation * joints[k].axis;
    if (joint_is_prismatic(joints[k].kind))
      jac.col(k) = axis_w;
    else
      jac.col(k) = axis_w.cross(p_ee - frame.translation);
  }
  return jac;
}

}  // namespace chainfuse

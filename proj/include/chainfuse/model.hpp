#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "chainfuse/transform.hpp"

namespace chainfuse {

enum class JointKind { Revolute, Prismatic, VirtualRevolute, VirtualPrismatic };

inline bool joint_is_virtual(JointKind k) {
  return k == JointKind::VirtualRevolute || k == JointKind::VirtualPrismatic;
}
inline bool joint_is_prismatic(JointKind k) {
  return k == JointKind::Prismatic || k == JointKind::VirtualPrismatic;
}

inline const char* joint_kind_name(JointKind k) {
  switch (k) {
    case JointKind::Revolute: return "revolute";
    case JointKind::Prismatic: return "prismatic";
    case JointKind::VirtualRevolute: return "virtual-revolute";
    case JointKind::VirtualPrismatic: return "virtual-prismatic";
  }
  return "?";
}

struct ModelError : std::runtime_error {
  enum class Code {
    BadDocument,
    DuplicateName,
    CycleInJointGraph,
    NonUnitAxis,
    MissingCameraLink,
    UnknownLink,
    BadGeometry,
    AlreadyInjected,
    LengthMismatch,
  };
  Code code;
  ModelError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

/// One degree of freedom between two links. Virtual kinds are the injected
/// camera-offset joints; they never carry an encoder.
struct JointSpec {
  std::string name;
  std::string parent_link;
  std::string child_link;
  RigidTransform origin;   // fixed transform from parent link frame
  Eigen::Vector3d axis{0, 0, 1};
  JointKind kind = JointKind::Revolute;
  bool has_encoder = true;
};

/// Swept-sphere primitive in the owning link's frame.
struct Capsule {
  Eigen::Vector3d a{0, 0, 0};
  Eigen::Vector3d b{0, 0, 0};
  double radius = 0.0;
};

struct LinkGeometry {
  std::string link;
  std::vector<Capsule> capsules;
};

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  double z_min = 0, z_max = 0;
};

/// Joint values (rad for revolute, m for prismatic) in model joint order.
struct JointVector {
  Eigen::VectorXd values;
  double timestamp = 0.0;
};

/// Articulated chain: a joint tree over links, per-link capsule geometry and
/// a pinhole camera attached to one link. Immutable after construction and
/// safe to share across threads.
class KinematicModel {
 public:
  struct Description {
    std::vector<LinkGeometry> links;
    std::vector<JointSpec> joints;
    std::string camera_mount_link;
    CameraIntrinsics camera;
    std::string end_effector_link;  // empty: child of last physical joint
  };

  static KinematicModel from_description(const Description& d) {
    KinematicModel m;
    m.build(d);
    return m;
  }

  const std::vector<JointSpec>& joints() const { return joints_; }
  int joint_count() const { return static_cast<int>(joints_.size()); }
  int physical_joint_count() const { return physical_joints_; }
  int encoder_joint_count() const { return encoder_joints_; }
  bool virtual_injected() const { return virtual_injected_; }

  const std::vector<std::string>& link_names() const { return link_names_; }
  int link_count() const { return static_cast<int>(link_names_.size()); }
  int link_index(const std::string& name) const {
    auto it = link_lookup_.find(name);
    if (it == link_lookup_.end())
      throw ModelError(ModelError::Code::UnknownLink, "unknown link: " + name);
    return it->second;
  }
  const std::vector<Capsule>& link_capsules(int link) const { return capsules_by_link_[link]; }

  int base_link() const { return base_link_; }
  int camera_mount_link() const { return camera_mount_link_; }
  /// The link whose frame is the camera: the effective-camera link once the
  /// virtual joints are injected, the mount link before.
  int camera_link() const { return camera_link_; }
  int end_effector_link() const { return end_effector_link_; }
  const CameraIntrinsics& camera() const { return camera_; }

  int joint_parent_link(int j) const { return joint_parent_link_[j]; }
  int joint_child_link(int j) const { return joint_child_link_[j]; }

  Description description() const {
    Description d;
    for (int l = 0; l < link_count(); ++l)
      if (!capsules_by_link_[l].empty()) d.links.push_back({link_names_[l], capsules_by_link_[l]});
    d.joints = joints_;
    d.camera_mount_link = link_names_[camera_mount_link_];
    d.camera = camera_;
    d.end_effector_link = link_names_[end_effector_link_];
    return d;
  }

 private:
  friend KinematicModel inject_virtual_joints(const KinematicModel&);

  void build(const Description& d);

  std::vector<JointSpec> joints_;  // topologically sorted
  std::vector<std::string> link_names_;
  std::map<std::string, int> link_lookup_;
  std::vector<std::vector<Capsule>> capsules_by_link_;
  std::vector<int> joint_parent_link_;
  std::vector<int> joint_child_link_;
  int base_link_ = -1;
  int camera_mount_link_ = -1;
  int camera_link_ = -1;
  int end_effector_link_ = -1;
  CameraIntrinsics camera_;
  int physical_joints_ = 0;
  int encoder_joints_ = 0;
  bool virtual_injected_ = false;
};

inline void KinematicModel::build(const Description& d) {
  using Code = ModelError::Code;
  if (d.joints.empty())
    throw ModelError(Code::BadDocument, "model has no joints");

  // Collect links from joints, geometry and the camera mount.
  auto add_link = [&](const std::string& name) {
    if (name.empty()) throw ModelError(Code::BadDocument, "empty link name");
    if (!link_lookup_.count(name)) {
      link_lookup_[name] = static_cast<int>(link_names_.size());
      link_names_.push_back(name);
    }
  };
  std::map<std::string, int> joint_names;
  for (const auto& j : d.joints) {
    if (j.name.empty()) throw ModelError(Code::BadDocument, "empty joint name");
    if (joint_names.count(j.name))
      throw ModelError(Code::DuplicateName, "duplicate joint name: " + j.name);
    joint_names[j.name] = 1;
    add_link(j.parent_link);
    add_link(j.child_link);
  }
  capsules_by_link_.assign(link_names_.size(), {});
  {
    std::map<std::string, int> geom_names;
    for (const auto& g : d.links) {
      if (geom_names.count(g.link))
        throw ModelError(Code::DuplicateName, "duplicate link geometry: " + g.link);
      geom_names[g.link] = 1;
      auto it = link_lookup_.find(g.link);
      if (it == link_lookup_.end())
        throw ModelError(Code::UnknownLink, "geometry for unknown link: " + g.link);
      for (const auto& c : g.capsules) {
        if (!(c.radius > 0.0) || !std::isfinite(c.radius) ||
            !c.a.allFinite() || !c.b.allFinite())
          throw ModelError(Code::BadGeometry, "bad capsule on link " + g.link);
      }
      capsules_by_link_[it->second] = g.capsules;
    }
  }

  // Tree checks: unique parent per link, single root, no cycles.
  const int n_links = static_cast<int>(link_names_.size());
  std::vector<int> parent_joint(n_links, -1);
  for (size_t k = 0; k < d.joints.size(); ++k) {
    const int child = link_lookup_.at(d.joints[k].child_link);
    if (parent_joint[child] != -1)
      throw ModelError(Code::CycleInJointGraph,
                       "joint graph is not a tree: link " + d.joints[k].child_link +
                           " has multiple parent joints");
    parent_joint[child] = static_cast<int>(k);
  }
  int root = -1;
  for (int l = 0; l < n_links; ++l) {
    if (parent_joint[l] == -1) {
      if (root != -1)
        throw ModelError(Code::BadDocument,
                         "joint graph has multiple roots: " + link_names_[root] + ", " +
                             link_names_[l]);
      root = l;
    }
  }
  if (root == -1)
    throw ModelError(Code::CycleInJointGraph, "cycle in joint graph");
  base_link_ = root;

  // Topological order, keeping document order among ready joints so that
  // injected virtual joints stay at the end of the index space.
  std::vector<int> order;
  {
    std::vector<char> link_ready(n_links, 0), joint_done(d.joints.size(), 0);
    link_ready[root] = 1;
    for (size_t placed = 0; placed < d.joints.size(); ++placed) {
      int next = -1;
      for (size_t k = 0; k < d.joints.size(); ++k) {
        if (!joint_done[k] && link_ready[link_lookup_.at(d.joints[k].parent_link)]) {
          next = static_cast<int>(k);
          break;
        }
      }
      if (next < 0) throw ModelError(Code::CycleInJointGraph, "cycle in joint graph");
      joint_done[next] = 1;
      link_ready[link_lookup_.at(d.joints[next].child_link)] = 1;
      order.push_back(next);
    }
  }

  int n_virtual = 0;
  for (int k : order) {
    JointSpec j = d.joints[k];
    const double axis_err = std::abs(j.axis.norm() - 1.0);
    if (!(axis_err <= 1e-9))
      throw ModelError(Code::NonUnitAxis, "non-unit axis on joint " + j.name);
    const bool virt = joint_is_virtual(j.kind);
    if (virt && j.has_encoder)
      throw ModelError(Code::BadDocument, "virtual joint with encoder: " + j.name);
    if (!virt && !j.has_encoder)
      throw ModelError(Code::BadDocument, "physical joint without encoder: " + j.name);
    n_virtual += virt ? 1 : 0;
    joints_.push_back(std::move(j));
  }
  physical_joints_ = joint_count() - n_virtual;
  encoder_joints_ = physical_joints_;
  if (n_virtual != 0 && n_virtual != 6)
    throw ModelError(Code::BadDocument, "expected 0 or 6 virtual joints");
  virtual_injected_ = n_virtual == 6;
  // fixed index layout: all physical joints first, the six virtual ones last
  for (int k = 0; k < joint_count(); ++k)
    if (joint_is_virtual(joints_[k].kind) != (k >= physical_joints_))
      throw ModelError(Code::BadDocument, "virtual joints must come after all physical joints");

  joint_parent_link_.resize(joints_.size());
  joint_child_link_.resize(joints_.size());
  for (size_t k = 0; k < joints_.size(); ++k) {
    joint_parent_link_[k] = link_lookup_.at(joints_[k].parent_link);
    joint_child_link_[k] = link_lookup_.at(joints_[k].child_link);
  }

  // Camera.
  if (!link_lookup_.count(d.camera_mount_link))
    throw ModelError(Code::MissingCameraLink,
                     "missing camera link: " + d.camera_mount_link);
  camera_mount_link_ = link_lookup_.at(d.camera_mount_link);
  camera_ = d.camera;
  if (!(camera_.fx > 0) || !(camera_.fy > 0) || camera_.width <= 0 || camera_.height <= 0 ||
      !(camera_.z_min > 0) || !(camera_.z_min < camera_.z_max))
    throw ModelError(Code::BadDocument, "bad camera intrinsics");
  if (virtual_injected_) {
    // effective camera = the child of the last virtual joint
    int cam = -1;
    for (size_t k = 0; k < joints_.size(); ++k)
      if (joint_is_virtual(joints_[k].kind)) cam = joint_child_link_[k];
    camera_link_ = cam;
  } else {
    camera_link_ = camera_mount_link_;
  }

  // End effector.
  if (!d.end_effector_link.empty()) {
    if (!link_lookup_.count(d.end_effector_link))
      throw ModelError(Code::UnknownLink, "unknown end-effector link: " + d.end_effector_link);
    end_effector_link_ = link_lookup_.at(d.end_effector_link);
  } else {
    for (size_t k = 0; k < joints_.size(); ++k)
      if (!joint_is_virtual(joints_[k].kind)) end_effector_link_ = joint_child_link_[k];
  }
}

/// Returns a copy of the model with the six camera-offset joints inserted
/// between the camera mount link and a new effective-camera link, in the
/// fixed order tx, ty, tz, rx, ry, rz. All six at value zero reproduce the
/// nominal camera pose exactly.
inline KinematicModel inject_virtual_joints(const KinematicModel& m) {
  if (m.virtual_injected())
    throw ModelError(ModelError::Code::AlreadyInjected, "virtual joints already injected");
  KinematicModel::Description d = m.description();
  const char* names[6] = {"__cam_tx", "__cam_ty", "__cam_tz",
                          "__cam_rx", "__cam_ry", "__cam_rz"};
  const Eigen::Vector3d axes[3] = {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(),
                                   Eigen::Vector3d::UnitZ()};
  std::string parent = d.camera_mount_link;
  for (int i = 0; i < 6; ++i) {
    JointSpec j;
    j.name = names[i];
    j.parent_link = parent;
    j.child_link = (i == 5) ? std::string("__camera_effective")
                            : std::string(names[i]) + "_link";
    j.origin = RigidTransform::identity();
    j.axis = axes[i % 3];
    j.kind = (i < 3) ? JointKind::VirtualPrismatic : JointKind::VirtualRevolute;
    j.has_encoder = false;
    d.joints.push_back(j);
    parent = j.child_link;
  }
  return KinematicModel::from_description(d);
}

// ---------------------------------------------------------------------------
// Document parsing

namespace detail {

inline Eigen::Vector3d vec3_from_json(const nlohmann::json& a, const char* what) {
  if (!a.is_array() || a.size() != 3)
    throw ModelError(ModelError::Code::BadDocument, std::string("expected 3-vector for ") + what);
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

inline JointKind joint_kind_from_string(const std::string& s) {
  if (s == "revolute") return JointKind::Revolute;
  if (s == "prismatic") return JointKind::Prismatic;
  if (s == "virtual-revolute") return JointKind::VirtualRevolute;
  if (s == "virtual-prismatic") return JointKind::VirtualPrismatic;
  throw ModelError(ModelError::Code::BadDocument, "unknown joint kind: " + s);
}

}  // namespace detail

/// Parses the JSON model document (keys `links`, `joints`, `camera`, optional
/// `end_effector`). Angles are radians, lengths meters, rpy extrinsic x-y-z.
inline KinematicModel parse_model(const std::string& text) {
  using Code = ModelError::Code;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(Code::BadDocument, std::string("model document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("links") || !doc.contains("joints") || !doc.contains("camera"))
    throw ModelError(Code::BadDocument, "model document needs links, joints and camera");

  KinematicModel::Description d;
  try {
    for (const auto& l : doc["links"]) {
      LinkGeometry g;
      g.link = l.at("name").get<std::string>();
      if (l.contains("capsules"))
        for (const auto& c : l["capsules"]) {
          Capsule cap;
          cap.a = detail::vec3_from_json(c.at("a"), "capsule endpoint a");
          cap.b = detail::vec3_from_json(c.at("b"), "capsule endpoint b");
          cap.radius = c.at("r").get<double>();
          g.capsules.push_back(cap);
        }
      d.links.push_back(std::move(g));
    }
    for (const auto& js : doc["joints"]) {
      JointSpec j;
      j.name = js.at("name").get<std::string>();
      j.parent_link = js.at("parent").get<std::string>();
      j.child_link = js.at("child").get<std::string>();
      Eigen::Vector3d xyz = Eigen::Vector3d::Zero(), rpy = Eigen::Vector3d::Zero();
      if (js.contains("origin")) {
        const auto& o = js["origin"];
        if (o.contains("xyz")) xyz = detail::vec3_from_json(o["xyz"], "origin xyz");
        if (o.contains("rpy")) rpy = detail::vec3_from_json(o["rpy"], "origin rpy");
      }
      j.origin = RigidTransform::from_xyz_rpy(xyz, rpy);
      j.axis = detail::vec3_from_json(js.at("axis"), "joint axis");
      j.kind = detail::joint_kind_from_string(js.value("kind", "revolute"));
      j.has_encoder = !joint_is_virtual(j.kind);
      d.joints.push_back(std::move(j));
    }
    const auto& cam = doc["camera"];
    d.camera_mount_link = cam.at("mount_link").get<std::string>();
    d.camera.fx = cam.at("fx").get<double>();
    d.camera.fy = cam.at("fy").get<double>();
    d.camera.cx = cam.at("cx").get<double>();
    d.camera.cy = cam.at("cy").get<double>();
    d.camera.width = cam.at("width").get<int>();
    d.camera.height = cam.at("height").get<int>();
    d.camera.z_min = cam.at("z_min").get<double>();
    d.camera.z_max = cam.at("z_max").get<double>();
    d.end_effector_link = doc.value("end_effector", "");
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(Code::BadDocument, std::string("malformed model document: ") + e.what());
  }
  return KinematicModel::from_description(d);
}

/// Serializes a model back into the document format accepted by parse_model.
inline std::string model_to_json(const KinematicModel& m) {
  nlohmann::json doc;
  doc["links"] = nlohmann::json::array();
  const auto d = m.description();
  for (const auto& g : d.links) {
    nlohmann::json l{{"name", g.link}, {"capsules", nlohmann::json::array()}};
    for (const auto& c : g.capsules)
      l["capsules"].push_back({{"a", {c.a.x(), c.a.y(), c.a.z()}},
                               {"b", {c.b.x(), c.b.y(), c.b.z()}},
                               {"r", c.radius}});
    doc["links"].push_back(l);
  }
  doc["joints"] = nlohmann::json::array();
  for (const auto& j : d.joints) {
    const Eigen::Vector3d xyz = j.origin.translation;
    const Eigen::Matrix3d R = j.origin.rotation_matrix();
    // extrinsic x-y-z angles from R = Rz Ry Rx
    const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
    double roll, yaw;
    if (std::abs(std::cos(pitch)) > 1e-12) {
      roll = std::atan2(R(2, 1), R(2, 2));
      yaw = std::atan2(R(1, 0), R(0, 0));
    } else {
      roll = std::atan2(-R(1, 2), R(1, 1));
      yaw = 0.0;
    }
    doc["joints"].push_back({{"name", j.name},
                             {"parent", j.parent_link},
                             {"child", j.child_link},
                             {"origin", {{"xyz", {xyz.x(), xyz.y(), xyz.z()}}, {"rpy", {roll, pitch, yaw}}}},
                             {"axis", {j.axis.x(), j.axis.y(), j.axis.z()}},
                             {"kind", joint_kind_name(j.kind)}});
  }
  doc["camera"] = {{"mount_link", d.camera_mount_link}, {"fx", d.camera.fx},
                   {"fy", d.camera.fy},                 {"cx", d.camera.cx},
                   {"cy", d.camera.cy},                 {"width", d.camera.width},
                   {"height", d.camera.height},         {"z_min", d.camera.z_min},
                   {"z_max", d.camera.z_max}};
  doc["end_effector"] = d.end_effector_link;
  return doc.dump(2);
}

}  // namespace chainfuse

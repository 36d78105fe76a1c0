#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "chainfuse/dataset.hpp"
#include "chainfuse/kinematics.hpp"
#include "chainfuse/model.hpp"
#include "chainfuse/render.hpp"
#include "chainfuse/rng.hpp"

namespace chainfuse {

/// C1 alternating-sign bias profile: plateaus at +/-amplitude of length
/// step_period, connected by 3u^2-2u^3 ramps of length `ramp` centered on
/// the step boundaries.
inline double smooth_step_bias(double t, double amplitude, double step_period, double ramp) {
  if (!(step_period > 0.0) || !(ramp >= 0.0) || ramp >= step_period)
    throw std::invalid_argument("smooth_step_bias: need 0 <= ramp < step_period");
  t = std::max(t, 0.0);  // profile starts on the +amplitude plateau
  auto plateau = [&](double x) {
    const double k = std::floor(x / step_period);
    return (static_cast<long long>(k) % 2 == 0) ? amplitude : -amplitude;
  };
  if (ramp > 0.0) {
    const double nearest = std::round(t / step_period) * step_period;
    if (nearest > 0.0 && std::abs(t - nearest) < 0.5 * ramp) {
      const double before = plateau(nearest - 0.25 * step_period);
      const double after = plateau(nearest + 0.25 * step_period);
      const double u = (t - (nearest - 0.5 * ramp)) / ramp;
      const double s = u * u * (3.0 - 2.0 * u);
      return before + (after - before) * s;
    }
  }
  return plateau(t);
}

struct SinusoidSpec {
  double amplitude = 0.0;
  double frequency = 0.0;  // Hz
  double phase = 0.0;
  double center = 0.0;
};

struct PcvSegment {
  double duration = 0.0;
  Eigen::VectorXd velocities;
};

struct TrajectoryConfig {
  enum class Kind { Sinusoidal, PiecewiseConstantVelocity };
  Kind kind = Kind::Sinusoidal;
  std::vector<SinusoidSpec> joints;    // sinusoidal mode; empty = defaults
  Eigen::VectorXd start;               // pcv mode
  std::vector<PcvSegment> segments;    // pcv mode, cycled
};

struct BiasConfig {
  enum class Mode { None, Constant, SmoothSteps };
  Mode mode = Mode::None;
  Eigen::VectorXd constant;   // per joint; single entry broadcasts
  double amplitude = 0.0;     // smooth-steps
  double step_period = 8.0;
  double ramp = 1.0;
};

struct OccluderWindow {
  double start = 0.0;
  double end = 0.0;
  Capsule capsule_in_camera;
};

struct OutOfViewWindow {
  double start = 0.0;
  double end = 0.0;
};

struct ScenarioConfig {
  double duration = 30.0;
  double encoder_period = 1e-3;
  double image_period = 1.0 / 30.0;
  double image_delay = 0.0;
  TrajectoryConfig trajectory;
  BiasConfig bias;
  Eigen::Matrix<double, 6, 1> camera_offset_truth = Eigen::Matrix<double, 6, 1>::Zero();
  std::vector<OccluderWindow> occluders;
  std::vector<OutOfViewWindow> out_of_view;
  Eigen::VectorXd out_of_view_offset;  // added to the trajectory inside windows
  double encoder_noise_std = 1e-3;
  double depth_sigma_z = 0.008;  // sensor noise applied to generated frames
  double depth_tail = 0.02;      // uniform outlier fraction in generated frames
  double truth_period = 0.01;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (!(duration > 0) || !(encoder_period > 0) || !(image_period > 0) || !(image_delay >= 0) ||
        !(truth_period > 0) || !(encoder_noise_std >= 0))
      throw std::invalid_argument("invalid scenario configuration");
  }
};

/// Default per-joint sinusoids: staggered frequencies and phases that keep a
/// seven-joint arm inside the camera frustum of the default model.
inline std::vector<SinusoidSpec> default_sinusoids(int n_joints) {
  std::vector<SinusoidSpec> out;
  for (int j = 0; j < n_joints; ++j) {
    SinusoidSpec s;
    s.amplitude = 0.25 + 0.05 * ((j * 3) % 4);
    s.frequency = 0.08 + 0.03 * j;
    s.phase = 0.9 * j;
    s.center = (j % 2 == 0) ? 0.15 : -0.2;
    out.push_back(s);
  }
  return out;
}

inline Eigen::VectorXd trajectory_angles(const TrajectoryConfig& traj, int n_joints, double t) {
  Eigen::VectorXd a(n_joints);
  if (traj.kind == TrajectoryConfig::Kind::Sinusoidal) {
    const auto spec = traj.joints.empty() ? default_sinusoids(n_joints) : traj.joints;
    if (static_cast<int>(spec.size()) != n_joints)
      throw std::invalid_argument("trajectory joint count mismatch");
    for (int j = 0; j < n_joints; ++j)
      a[j] = spec[j].center +
             spec[j].amplitude * std::sin(2.0 * M_PI * spec[j].frequency * t + spec[j].phase);
  } else {
    if (traj.start.size() != n_joints || traj.segments.empty())
      throw std::invalid_argument("piecewise trajectory needs start and segments");
    a = traj.start;
    double total = 0.0;
    for (const auto& s : traj.segments) total += s.duration;
    if (!(total > 0)) throw std::invalid_argument("piecewise trajectory has zero length");
    double left = t;
    // whole cycles first
    const double cycles = std::floor(left / total);
    for (const auto& s : traj.segments) a += cycles * s.duration * s.velocities;
    left -= cycles * total;
    for (const auto& s : traj.segments) {
      const double dt = std::min(left, s.duration);
      if (dt <= 0) break;
      a += dt * s.velocities;
      left -= dt;
    }
  }
  return a;
}

inline Eigen::VectorXd bias_at(const BiasConfig& bias, int n_joints, double t) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n_joints);
  switch (bias.mode) {
    case BiasConfig::Mode::None:
      break;
    case BiasConfig::Mode::Constant:
      if (bias.constant.size() == 1)
        b.setConstant(bias.constant[0]);
      else if (bias.constant.size() == n_joints)
        b = bias.constant;
      else
        throw std::invalid_argument("constant bias needs 1 or n entries");
      break;
    case BiasConfig::Mode::SmoothSteps:
      b.setConstant(smooth_step_bias(t, bias.amplitude, bias.step_period, bias.ramp));
      break;
  }
  return b;
}

/// Adds the occluder capsules whose window contains t to the render scene.
/// Occluders are given in the camera frame and never appear in ground truth.
inline void occluder_inject(RenderScene& scene, const std::vector<OccluderWindow>& schedule,
                            double t) {
  for (const auto& w : schedule)
    if (t >= w.start && t < w.end) scene.camera_capsules.push_back(w.capsule_in_camera);
}

namespace sim_detail {

// smooth blend into and out of an out-of-view window (0.5 s edges)
inline double out_of_view_blend(const std::vector<OutOfViewWindow>& windows, double t) {
  constexpr double kEdge = 0.5;
  double g = 0.0;
  for (const auto& w : windows) {
    if (t < w.start - kEdge || t > w.end + kEdge) continue;
    double v;
    if (t < w.start) v = (t - (w.start - kEdge)) / kEdge;
    else if (t > w.end) v = ((w.end + kEdge) - t) / kEdge;
    else v = 1.0;
    v = std::clamp(v, 0.0, 1.0);
    v = v * v * (3.0 - 2.0 * v);
    g = std::max(g, v);
  }
  return g;
}

}  // namespace sim_detail

/// True physical joint angles at time t (trajectory plus any out-of-view
/// excursion).
inline Eigen::VectorXd true_angles(const ScenarioConfig& cfg, int n_joints, double t) {
  Eigen::VectorXd a = trajectory_angles(cfg.trajectory, n_joints, t);
  if (!cfg.out_of_view.empty()) {
    Eigen::VectorXd off = cfg.out_of_view_offset;
    if (off.size() == 0) {
      off = Eigen::VectorXd::Zero(n_joints);
      off[0] = 2.0;  // default: swing the first joint out of the frustum
    }
    if (off.size() != n_joints) throw std::invalid_argument("out_of_view_offset length mismatch");
    a += sim_detail::out_of_view_blend(cfg.out_of_view, t) * off;
  }
  if (!a.allFinite()) throw std::invalid_argument("trajectory produced non-finite angles");
  return a;
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& c);

/// Generates a ground-truthed synthetic dataset. Deterministic given
/// cfg.rng_seed. If out_dir is given, frames and index files are written
/// there; otherwise frames stay in memory.
inline Dataset generate(const KinematicModel& model, const ScenarioConfig& cfg,
                        const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  cfg.validate();
  const KinematicModel injected = model.virtual_injected() ? model : inject_virtual_joints(model);
  const int n_phys = injected.physical_joint_count();
  const int n_total = injected.joint_count();
  const auto& cam = injected.camera();

  Dataset ds;
  ds.model_json = model_to_json(model);
  ds.scenario = scenario_to_json(cfg);
  Rng rng(cfg.rng_seed);

  auto full_vector = [&](double t) {
    Eigen::VectorXd full(n_total);
    full.head(n_phys) = true_angles(cfg, n_phys, t);
    full.tail(6) = cfg.camera_offset_truth;
    return full;
  };

  // encoder stream (integer stepping keeps timestamps drift-free)
  const double eps = 1e-9;
  for (long k = 0; k * cfg.encoder_period <= cfg.duration + eps; ++k) {
    const double t = k * cfg.encoder_period;
    EncoderRecord r;
    r.timestamp = t;
    r.q = true_angles(cfg, n_phys, t) + bias_at(cfg.bias, n_phys, t);
    for (int j = 0; j < n_phys; ++j) r.q[j] += rng.normal(0.0, cfg.encoder_noise_std);
    ds.encoders.push_back(std::move(r));
  }

  // depth frames
  RenderContext ctx(injected);
  std::int64_t frame_id = 0;
  for (long k = 1; k * cfg.image_period <= cfg.duration + eps; ++k) {
    const double t = k * cfg.image_period;
    RenderScene scene{&injected, full_vector(t), {}};
    occluder_inject(scene, cfg.occluders, t);
    RenderedDepth rendered;
    ctx.render_capsules(ctx.camera_space_capsules(scene), rendered);

    DepthImage img;
    img.width = cam.width;
    img.height = cam.height;
    img.timestamp = t;
    img.frame_id = frame_id;
    img.depth.resize(rendered.depth.size());
    for (size_t i = 0; i < rendered.depth.size(); ++i) {
      const double d = rendered.depth[i];
      if (!std::isfinite(d) || d < cam.z_min || d > cam.z_max) {
        img.depth[i] = std::numeric_limits<float>::quiet_NaN();
        continue;
      }
      double z;
      if (rng.uniform() < cfg.depth_tail) {
        z = rng.uniform(cam.z_min, cam.z_max);
      } else {
        z = rng.normal(d, cfg.depth_sigma_z);
        for (int tries = 0; (z < cam.z_min || z > cam.z_max) && tries < 100; ++tries)
          z = rng.normal(d, cfg.depth_sigma_z);
        z = std::clamp(z, static_cast<double>(cam.z_min), static_cast<double>(cam.z_max));
      }
      img.depth[i] = static_cast<float>(z);
    }

    ImageRecord rec;
    rec.frame_id = frame_id;
    rec.timestamp = t;
    rec.delay = cfg.image_delay;
    char buf[32];
    std::snprintf(buf, sizeof buf, "frames/%06lld.dpth", static_cast<long long>(frame_id));
    rec.file = buf;
    ds.images.push_back(rec);
    ds.frames_in_memory[frame_id] = std::move(img);
    ++frame_id;
  }

  // ground truth
  for (long k = 0; k * cfg.truth_period <= cfg.duration + eps; ++k) {
    const double t = k * cfg.truth_period;
    TruthRecord r;
    r.timestamp = t;
    r.angles = true_angles(cfg, n_phys, t);
    r.camera_offset = cfg.camera_offset_truth;
    r.ee_in_camera = end_effector_in_camera(injected, {full_vector(t), t});
    ds.truth.push_back(std::move(r));
  }

  if (out_dir) {
    save_dataset(ds, *out_dir);
    ds.dir = *out_dir;
    ds.frames_in_memory.clear();
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Scenario configuration <-> JSON

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  c.duration = j.value("duration", c.duration);
  c.encoder_period = j.value("encoder_period", c.encoder_period);
  c.image_period = j.value("image_period", c.image_period);
  c.image_delay = j.value("image_delay", c.image_delay);
  c.encoder_noise_std = j.value("encoder_noise_std", c.encoder_noise_std);
  c.depth_sigma_z = j.value("depth_sigma_z", c.depth_sigma_z);
  c.depth_tail = j.value("depth_tail", c.depth_tail);
  c.truth_period = j.value("truth_period", c.truth_period);
  c.rng_seed = j.value("seed", c.rng_seed);
  if (j.contains("trajectory")) {
    const auto& t = j["trajectory"];
    const std::string kind = t.value("kind", "sinusoidal");
    if (kind == "sinusoidal") {
      c.trajectory.kind = TrajectoryConfig::Kind::Sinusoidal;
      if (t.contains("joints"))
        for (const auto& s : t["joints"])
          c.trajectory.joints.push_back({s.value("amplitude", 0.0), s.value("frequency", 0.0),
                                         s.value("phase", 0.0), s.value("center", 0.0)});
    } else if (kind == "piecewise-constant-velocity") {
      c.trajectory.kind = TrajectoryConfig::Kind::PiecewiseConstantVelocity;
      c.trajectory.start = dataset_detail::vector_from_json(t.at("start"));
      for (const auto& s : t.at("segments"))
        c.trajectory.segments.push_back(
            {s.at("duration").get<double>(), dataset_detail::vector_from_json(s.at("velocities"))});
    } else {
      throw std::invalid_argument("unknown trajectory kind: " + kind);
    }
  }
  if (j.contains("bias")) {
    const auto& b = j["bias"];
    const std::string mode = b.value("mode", "none");
    if (mode == "none") {
      c.bias.mode = BiasConfig::Mode::None;
    } else if (mode == "constant") {
      c.bias.mode = BiasConfig::Mode::Constant;
      if (b.contains("values"))
        c.bias.constant = dataset_detail::vector_from_json(b["values"]);
      else
        c.bias.constant = Eigen::VectorXd::Constant(1, b.value("value", 0.0));
    } else if (mode == "smooth-steps") {
      c.bias.mode = BiasConfig::Mode::SmoothSteps;
      c.bias.amplitude = b.value("amplitude", 0.0);
      c.bias.step_period = b.value("step_period", 8.0);
      c.bias.ramp = b.value("ramp", 1.0);
    } else {
      throw std::invalid_argument("unknown bias mode: " + mode);
    }
  }
  if (j.contains("camera_offset")) {
    const Eigen::VectorXd v = dataset_detail::vector_from_json(j["camera_offset"]);
    if (v.size() != 6) throw std::invalid_argument("camera_offset must have 6 entries");
    c.camera_offset_truth = v;
  }
  if (j.contains("occluders"))
    for (const auto& o : j["occluders"]) {
      OccluderWindow w;
      w.start = o.at("start").get<double>();
      w.end = o.at("end").get<double>();
      const auto& cap = o.at("capsule");
      w.capsule_in_camera.a = detail::vec3_from_json(cap.at("a"), "occluder endpoint a");
      w.capsule_in_camera.b = detail::vec3_from_json(cap.at("b"), "occluder endpoint b");
      w.capsule_in_camera.radius = cap.at("r").get<double>();
      c.occluders.push_back(w);
    }
  if (j.contains("out_of_view"))
    for (const auto& o : j["out_of_view"])
      c.out_of_view.push_back({o.at("start").get<double>(), o.at("end").get<double>()});
  if (j.contains("out_of_view_offset"))
    c.out_of_view_offset = dataset_detail::vector_from_json(j["out_of_view_offset"]);
  return c;
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  nlohmann::json j{{"duration", c.duration},
                   {"encoder_period", c.encoder_period},
                   {"image_period", c.image_period},
                   {"image_delay", c.image_delay},
                   {"encoder_noise_std", c.encoder_noise_std},
                   {"depth_sigma_z", c.depth_sigma_z},
                   {"depth_tail", c.depth_tail},
                   {"truth_period", c.truth_period},
                   {"seed", c.rng_seed}};
  nlohmann::json t;
  if (c.trajectory.kind == TrajectoryConfig::Kind::Sinusoidal) {
    t["kind"] = "sinusoidal";
    t["joints"] = nlohmann::json::array();
    for (const auto& s : c.trajectory.joints)
      t["joints"].push_back({{"amplitude", s.amplitude},
                             {"frequency", s.frequency},
                             {"phase", s.phase},
                             {"center", s.center}});
  } else {
    t["kind"] = "piecewise-constant-velocity";
    t["start"] = dataset_detail::vector_to_json(c.trajectory.start);
    t["segments"] = nlohmann::json::array();
    for (const auto& s : c.trajectory.segments)
      t["segments"].push_back(
          {{"duration", s.duration}, {"velocities", dataset_detail::vector_to_json(s.velocities)}});
  }
  j["trajectory"] = t;
  nlohmann::json b;
  switch (c.bias.mode) {
    case BiasConfig::Mode::None: b["mode"] = "none"; break;
    case BiasConfig::Mode::Constant:
      b["mode"] = "constant";
      b["values"] = dataset_detail::vector_to_json(c.bias.constant);
      break;
    case BiasConfig::Mode::SmoothSteps:
      b["mode"] = "smooth-steps";
      b["amplitude"] = c.bias.amplitude;
      b["step_period"] = c.bias.step_period;
      b["ramp"] = c.bias.ramp;
      break;
  }
  j["bias"] = b;
  j["camera_offset"] = dataset_detail::vector_to_json(c.camera_offset_truth);
  j["occluders"] = nlohmann::json::array();
  for (const auto& o : c.occluders)
    j["occluders"].push_back({{"start", o.start},
                              {"end", o.end},
                              {"capsule",
                               {{"a", {o.capsule_in_camera.a.x(), o.capsule_in_camera.a.y(),
                                       o.capsule_in_camera.a.z()}},
                                {"b", {o.capsule_in_camera.b.x(), o.capsule_in_camera.b.y(),
                                       o.capsule_in_camera.b.z()}},
                                {"r", o.capsule_in_camera.radius}}}});
  j["out_of_view"] = nlohmann::json::array();
  for (const auto& o : c.out_of_view)
    j["out_of_view"].push_back({{"start", o.start}, {"end", o.end}});
  if (c.out_of_view_offset.size() > 0)
    j["out_of_view_offset"] = dataset_detail::vector_to_json(c.out_of_view_offset);
  return j;
}

/// The seven-joint arm used by default: roughly one meter of reach posed in
/// front of a camera at the base-link origin looking along +z.
inline const char* default_arm_document() {
  return R"JSON({
  "links": [
    {"name": "l1", "capsules": [{"a": [0,0,0],    "b": [0.18,0,0], "r": 0.060}]},
    {"name": "l2", "capsules": [{"a": [0,0,0],    "b": [0.20,0,0], "r": 0.055}]},
    {"name": "l3", "capsules": [{"a": [0,0,0],    "b": [0.20,0,0], "r": 0.050}]},
    {"name": "l4", "capsules": [{"a": [0,0,0],    "b": [0.18,0,0], "r": 0.045}]},
    {"name": "l5", "capsules": [{"a": [0,0,0],    "b": [0.16,0,0], "r": 0.040}]},
    {"name": "l6", "capsules": [{"a": [0,0,0],    "b": [0.12,0,0], "r": 0.035}]},
    {"name": "l7", "capsules": [{"a": [0,0,0],    "b": [0.10,0,0], "r": 0.030},
                                {"a": [0.10,0,0], "b": [0.16,0,0], "r": 0.045}]}
  ],
  "joints": [
    {"name": "j1", "parent": "base", "child": "l1",
     "origin": {"xyz": [-0.88, 0.18, 1.15], "rpy": [0,0,0]}, "axis": [0,1,0], "kind": "revolute"},
    {"name": "j2", "parent": "l1", "child": "l2",
     "origin": {"xyz": [0.18,0,0], "rpy": [0,0,0]}, "axis": [0,0,1], "kind": "revolute"},
    {"name": "j3", "parent": "l2", "child": "l3",
     "origin": {"xyz": [0.20,0,0], "rpy": [0,0,0]}, "axis": [1,0,0], "kind": "revolute"},
    {"name": "j4", "parent": "l3", "child": "l4",
     "origin": {"xyz": [0.20,0,0], "rpy": [0,0,0]}, "axis": [0,1,0], "kind": "revolute"},
    {"name": "j5", "parent": "l4", "child": "l5",
     "origin": {"xyz": [0.18,0,0], "rpy": [0,0,0]}, "axis": [1,0,0], "kind": "revolute"},
    {"name": "j6", "parent": "l5", "child": "l6",
     "origin": {"xyz": [0.16,0,0], "rpy": [0,0,0]}, "axis": [0,1,0], "kind": "revolute"},
    {"name": "j7", "parent": "l6", "child": "l7",
     "origin": {"xyz": [0.12,0,0], "rpy": [0,0,0]}, "axis": [1,0,0], "kind": "revolute"}
  ],
  "camera": {"mount_link": "base", "fx": 110.0, "fy": 110.0, "cx": 80.0, "cy": 60.0,
             "width": 160, "height": 120, "z_min": 0.3, "z_max": 4.0},
  "end_effector": "l7"
})JSON";
}

inline KinematicModel default_arm_model() { return parse_model(default_arm_document()); }

}  // namespace chainfuse

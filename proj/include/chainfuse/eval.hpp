#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chainfuse/dataset.hpp"
#include "chainfuse/fusion.hpp"
#include "chainfuse/kinematics.hpp"
#include "chainfuse/model.hpp"

namespace chainfuse {

enum class MethodId { EncodersOnly, CameraOffsetOnly, FullFusion, VisionOnly };

inline const char* method_name(MethodId m) {
  switch (m) {
    case MethodId::EncodersOnly: return "encoders-only";
    case MethodId::CameraOffsetOnly: return "camera-offset-only";
    case MethodId::FullFusion: return "full-fusion";
    case MethodId::VisionOnly: return "vision-only";
  }
  return "?";
}

inline std::optional<MethodId> method_from_name(const std::string& s) {
  if (s == "encoders-only") return MethodId::EncodersOnly;
  if (s == "camera-offset-only") return MethodId::CameraOffsetOnly;
  if (s == "full-fusion") return MethodId::FullFusion;
  if (s == "vision-only") return MethodId::VisionOnly;
  return std::nullopt;
}

inline std::vector<MethodId> all_methods() {
  return {MethodId::EncodersOnly, MethodId::CameraOffsetOnly, MethodId::FullFusion,
          MethodId::VisionOnly};
}

struct ErrorSample {
  double timestamp = 0.0;
  double translational = 0.0;  // m
  double angular = 0.0;        // rad, geodesic
  int run = 0;
};

/// Translational and geodesic angular error between two poses.
inline std::pair<double, double> pose_errors(const RigidTransform& estimate,
                                             const RigidTransform& truth) {
  const double trans = (estimate.translation - truth.translation).norm();
  const double ang = estimate.rotation_angle_to(truth);
  return {trans, std::clamp(ang, 0.0, M_PI)};
}

/// Nearest-rank percentile: value at index ceil(p*N/100) of the sorted
/// sample (1-based).
inline double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  size_t rank = static_cast<size_t>(std::ceil(p * static_cast<double>(n) / 100.0));
  rank = std::clamp<size_t>(rank, 1, n);
  return values[rank - 1];
}

struct SummaryRow {
  std::string sequence;
  std::string method;
  std::string window = "full";  // "full" or "post-convergence"
  double trans_p1 = 0, trans_p25 = 0, trans_p50 = 0, trans_p75 = 0, trans_p99 = 0;
  double ang_p1 = 0, ang_p25 = 0, ang_p50 = 0, ang_p75 = 0, ang_p99 = 0;
  int runs = 0;
  size_t samples = 0;
};

/// Pooled nearest-rank percentiles over all timestamps and runs.
inline SummaryRow summarize(const std::vector<ErrorSample>& samples, int runs,
                            const std::string& sequence = "", const std::string& method = "",
                            const std::string& window = "full") {
  if (samples.empty()) throw std::invalid_argument("summarize: no samples");
  std::vector<double> trans, ang;
  trans.reserve(samples.size());
  ang.reserve(samples.size());
  for (const auto& s : samples) {
    trans.push_back(s.translational);
    ang.push_back(s.angular);
  }
  SummaryRow r;
  r.sequence = sequence;
  r.method = method;
  r.window = window;
  r.runs = runs;
  r.samples = samples.size();
  r.trans_p1 = percentile_nearest_rank(trans, 1);
  r.trans_p25 = percentile_nearest_rank(trans, 25);
  r.trans_p50 = percentile_nearest_rank(trans, 50);
  r.trans_p75 = percentile_nearest_rank(trans, 75);
  r.trans_p99 = percentile_nearest_rank(trans, 99);
  r.ang_p1 = percentile_nearest_rank(ang, 1);
  r.ang_p25 = percentile_nearest_rank(ang, 25);
  r.ang_p50 = percentile_nearest_rank(ang, 50);
  r.ang_p75 = percentile_nearest_rank(ang, 75);
  r.ang_p99 = percentile_nearest_rank(ang, 99);
  return r;
}

/// Tracker estimate captured at a ground-truth timestamp (zero-order hold of
/// the most recent output).
struct EstimateAtTruth {
  double timestamp = 0.0;
  int run = 0;
  Eigen::VectorXd angle_mean, angle_std, bias_mean, bias_std;
  RigidTransform ee_in_camera;
  Eigen::Matrix<double, 6, 1> camera_offset = Eigen::Matrix<double, 6, 1>::Zero();
};

struct MethodParams {
  FilterParams filter;
  PixelModelParams pixel;
  CpfConfig cpf;
  FusionConfig fusion;
};

/// Streams the dataset through the selected method in arrival order
/// (arrival = timestamp + declared delay for images) and records the
/// estimate at every truth timestamp.
inline std::vector<EstimateAtTruth> track_dataset(MethodId method, const Dataset& ds,
                                                  const KinematicModel& model,
                                                  const MethodParams& params, int run_index = 0,
                                                  std::uint64_t base_seed = 0) {
  if (ds.encoders.empty()) throw DatasetError("dataset has no encoder records");
  const KinematicModel injected = model.virtual_injected() ? model : inject_virtual_joints(model);
  const int n_total = injected.joint_count();

  struct Event {
    double arrival;
    int kind;  // 0 encoder, 1 image, 2 truth (processing order at equal arrival)
    size_t index;
  };
  std::vector<Event> events;
  events.reserve(ds.encoders.size() + ds.images.size() + ds.truth.size());
  for (size_t i = 0; i < ds.encoders.size(); ++i)
    events.push_back({ds.encoders[i].timestamp, 0, i});
  for (size_t i = 0; i < ds.images.size(); ++i)
    events.push_back({ds.images[i].timestamp + ds.images[i].delay, 1, i});
  for (size_t i = 0; i < ds.truth.size(); ++i)
    events.push_back({ds.truth[i].timestamp, 2, i});
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.arrival != b.arrival) return a.arrival < b.arrival;
    return a.kind < b.kind;
  });

  MethodParams p = params;
  p.pixel.z_min = injected.camera().z_min;
  p.pixel.z_max = injected.camera().z_max;
  p.cpf.rng_seed = mix_seed(base_seed, static_cast<std::uint64_t>(run_index));
  switch (method) {
    case MethodId::EncodersOnly: break;
    case MethodId::CameraOffsetOnly: p.fusion.pin_physical_bias = true; break;
    case MethodId::FullFusion: break;
    case MethodId::VisionOnly: p.fusion.use_encoder_updates = false; break;
  }

  std::vector<EstimateAtTruth> out;
  out.reserve(ds.truth.size());

  if (method == MethodId::EncodersOnly) {
    // forward kinematics on the raw measured angles, virtual joints at zero
    const Eigen::VectorXd* latest_q = nullptr;
    for (const auto& ev : events) {
      if (ev.kind == 0) latest_q = &ds.encoders[ev.index].q;
      if (ev.kind == 2 && latest_q) {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(n_total);
        full.head(latest_q->size()) = *latest_q;
        EstimateAtTruth e;
        e.timestamp = ds.truth[ev.index].timestamp;
        e.run = run_index;
        e.angle_mean = full;
        e.angle_std = Eigen::VectorXd::Zero(n_total);
        e.bias_mean = Eigen::VectorXd::Zero(n_total);
        e.bias_std = Eigen::VectorXd::Zero(n_total);
        e.ee_in_camera = end_effector_in_camera(injected, {full, e.timestamp});
        out.push_back(std::move(e));
      }
    }
    return out;
  }

  FusionEngine engine(injected, p.filter, p.pixel, p.cpf, p.fusion);
  std::optional<TrackerOutput> latest;
  for (const auto& ev : events) {
    if (ev.kind == 0) {
      latest = engine.push_encoder({ds.encoders[ev.index].q, ds.encoders[ev.index].timestamp});
    } else if (ev.kind == 1) {
      const DepthImage img = ds.load_frame(ds.images[ev.index]);
      latest = engine.push_image(img);
    } else if (latest) {
      EstimateAtTruth e;
      e.timestamp = ds.truth[ev.index].timestamp;
      e.run = run_index;
      e.angle_mean = latest->angle_mean;
      e.angle_std = latest->angle_std;
      e.bias_mean = latest->bias_mean;
      e.bias_std = latest->bias_std;
      e.ee_in_camera = latest->ee_in_camera;
      e.camera_offset = latest->camera_offset;
      out.push_back(std::move(e));
    }
  }
  return out;
}

/// Errors of estimates against the dataset's truth records (matched by
/// timestamp).
inline std::vector<ErrorSample> errors_against_truth(const std::vector<EstimateAtTruth>& estimates,
                                                     const Dataset& ds) {
  if (ds.truth.empty()) throw DatasetError("dataset has no truth records");
  std::vector<ErrorSample> out;
  out.reserve(estimates.size());
  size_t ti = 0;
  for (const auto& e : estimates) {
    while (ti < ds.truth.size() && ds.truth[ti].timestamp < e.timestamp - 1e-9) ++ti;
    if (ti >= ds.truth.size() || std::abs(ds.truth[ti].timestamp - e.timestamp) > 1e-9)
      throw DatasetError("estimate timestamp has no matching truth record");
    const auto [trans, ang] = pose_errors(e.ee_in_camera, ds.truth[ti].ee_in_camera);
    out.push_back({e.timestamp, trans, ang, e.run});
  }
  return out;
}

/// One run of a method over a dataset, reported as error samples at the
/// truth timestamps.
inline std::vector<ErrorSample> run_method(MethodId method, const Dataset& ds,
                                           const KinematicModel& model, const MethodParams& params,
                                           int run_index = 0, std::uint64_t base_seed = 0) {
  return errors_against_truth(track_dataset(method, ds, model, params, run_index, base_seed), ds);
}

}  // namespace chainfuse

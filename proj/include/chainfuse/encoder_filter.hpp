#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chainfuse/model.hpp"

namespace chainfuse {

struct FilterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bivariate Gaussian belief over (angle, bias) for one joint.
struct JointBelief {
  Eigen::Vector2d mean{0.0, 0.0};       // (angle rad, bias rad)
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  double timestamp = 0.0;

  double angle_mean() const { return mean[0]; }
  double bias_mean() const { return mean[1]; }
  double angle_var() const { return cov(0, 0); }
  double bias_var() const { return cov(1, 1); }
};

struct FilterParams {
  double sigma_q = 0.002;          // rad, encoder noise std
  double sigma_a = 0.05;           // rad/sqrt(s), angle random-walk noise
  double sigma_b = 0.015;          // rad/sqrt(s), bias process noise
  double c = 0.998;                // bias mean-reversion factor per second, in (0,1)
  double sigma_a_virtual = 0.005;  // random-walk noise of the virtual joints
  double virtual_prior_std = 0.05; // initial std of the virtual joint values

  // exact-zero measurement noise would make the update degenerate
  static constexpr double kSigmaQFloor = 1e-6;

  double sigma_q_effective() const { return std::max(sigma_q, kSigmaQFloor); }

  void validate() const {
    if (!(sigma_q > 0) || !(sigma_a > 0) || !(sigma_b > 0) || !(c > 0) || !(c < 1) ||
        !(sigma_a_virtual > 0) || !(virtual_prior_std > 0))
      throw std::invalid_argument("invalid filter parameters");
  }
};

/// Stationary std of the unmeasured bias process for time step dt:
/// sqrt(dt sigma_b^2 / (1 - c^(2 dt))).
inline double asymptotic_bias_std(const FilterParams& p, double dt) {
  if (!(p.c < 1.0)) throw FilterError("bias mean-reversion factor must be < 1");
  if (!(dt > 0.0)) throw FilterError("dt must be positive");
  const double c2dt = std::pow(p.c, 2.0 * dt);
  return std::sqrt(dt * p.sigma_b * p.sigma_b / (1.0 - c2dt));
}

/// dt -> 0 limit of asymptotic_bias_std, used for initialization where no
/// measurement period is known yet: sigma_b / sqrt(-2 ln c).
inline double asymptotic_bias_std_limit(const FilterParams& p) {
  return p.sigma_b / std::sqrt(-2.0 * std::log(p.c));
}

/// Process update. Angle follows a random walk, the bias mean-reverts with
/// factor c^dt; for virtual joints (and pinned biases) the bias stays frozen
/// at zero with zero variance, and the angle uses the virtual noise level.
inline JointBelief predict(const JointBelief& b, double dt, const FilterParams& p,
                           bool is_virtual, bool bias_pinned = false) {
  if (dt < 0.0) throw FilterError("negative dt in predict");
  if (dt == 0.0) return b;
  JointBelief out = b;
  const double sa = is_virtual ? p.sigma_a_virtual : p.sigma_a;
  out.cov(0, 0) += dt * sa * sa;
  if (!is_virtual && !bias_pinned) {
    const double lam = std::pow(p.c, dt);
    out.mean[1] *= lam;
    out.cov(0, 1) *= lam;
    out.cov(1, 0) *= lam;
    out.cov(1, 1) = dt * p.sigma_b * p.sigma_b + lam * lam * out.cov(1, 1);
  }
  out.timestamp += dt;
  return out;
}

/// Measurement update with q = angle + bias + noise, H = [1 1]. Joseph-form
/// covariance update keeps the posterior symmetric positive definite.
inline JointBelief update_with_encoder(const JointBelief& b, double q, const FilterParams& p) {
  if (!std::isfinite(q)) throw FilterError("non-finite encoder measurement");
  const double r = p.sigma_q_effective() * p.sigma_q_effective();
  const Eigen::RowVector2d H(1.0, 1.0);
  const Eigen::Vector2d PHt = b.cov * H.transpose();
  const double s = H * PHt + r;
  const Eigen::Vector2d K = PHt / s;
  const double innovation = q - (b.mean[0] + b.mean[1]);
  JointBelief out = b;
  out.mean += K * innovation;
  const Eigen::Matrix2d IKH = Eigen::Matrix2d::Identity() - K * H;
  out.cov = IKH * b.cov * IKH.transpose() + K * r * K.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

/// Factorized belief over all joints, in model joint order (virtual joints
/// included). The flags record which joints are virtual and which biases are
/// pinned to zero (always the virtual ones; all of them in
/// camera-offset-only mode).
struct BeliefVector {
  std::vector<JointBelief> joints;
  std::vector<std::uint8_t> is_virtual;
  std::vector<std::uint8_t> bias_pinned;

  int size() const { return static_cast<int>(joints.size()); }
  double timestamp() const { return joints.empty() ? 0.0 : joints.front().timestamp; }
  int encoder_joint_count() const {
    int n = 0;
    for (auto v : is_virtual) n += v ? 0 : 1;
    return n;
  }
};

/// Initial beliefs from the first encoder reading: angle at the measurement,
/// bias at zero with the stationary variance; virtual joints at zero with the
/// configured prior std.
inline BeliefVector make_initial_beliefs(const KinematicModel& model, const JointVector& q0,
                                         const FilterParams& p, bool pin_physical_bias = false) {
  p.validate();
  if (q0.values.size() != model.encoder_joint_count())
    throw FilterError("initial measurement must cover exactly the encoder joints");
  BeliefVector out;
  const double bias_std0 = asymptotic_bias_std_limit(p);
  int qi = 0;
  for (const auto& j : model.joints()) {
    JointBelief b;
    b.timestamp = q0.timestamp;
    if (joint_is_virtual(j.kind)) {
      b.mean.setZero();
      b.cov.setZero();
      b.cov(0, 0) = p.virtual_prior_std * p.virtual_prior_std;
      out.is_virtual.push_back(1);
      out.bias_pinned.push_back(1);
    } else {
      b.mean << q0.values[qi++], 0.0;
      b.cov.setZero();
      b.cov(0, 0) = p.sigma_q_effective() * p.sigma_q_effective();
      b.cov(1, 1) = pin_physical_bias ? 0.0 : bias_std0 * bias_std0;
      out.is_virtual.push_back(0);
      out.bias_pinned.push_back(pin_physical_bias ? 1 : 0);
    }
    out.joints.push_back(b);
  }
  return out;
}

/// Encoder update addressed by joint index; virtual joints have no encoder.
inline void update_joint_with_encoder(BeliefVector& beliefs, int joint, double q,
                                      const FilterParams& p) {
  if (joint < 0 || joint >= beliefs.size()) throw FilterError("joint index out of range");
  if (beliefs.is_virtual[joint])
    throw FilterError("encoder update on virtual joint " + std::to_string(joint));
  beliefs.joints[joint] = update_with_encoder(beliefs.joints[joint], q, p);
}

/// One filter step: predict every joint by dt, then update the encoder
/// joints with their measurements (q covers exactly the encoder joints, in
/// model order). Pass skip_measurement_update to run prediction only.
inline BeliefVector filter_step(const BeliefVector& beliefs, const JointVector& q, double dt,
                                const FilterParams& p, bool skip_measurement_update = false) {
  if (q.values.size() != beliefs.encoder_joint_count())
    throw FilterError("measurement vector must cover exactly the encoder joints");
  BeliefVector out = beliefs;
  int qi = 0;
  for (int j = 0; j < beliefs.size(); ++j) {
    out.joints[j] = predict(beliefs.joints[j], dt, p, beliefs.is_virtual[j] != 0,
                            beliefs.bias_pinned[j] != 0);
    if (!beliefs.is_virtual[j]) {
      if (!skip_measurement_update)
        out.joints[j] = update_with_encoder(out.joints[j], q.values[qi], p);
      ++qi;
    }
  }
  return out;
}

}  // namespace chainfuse

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "chainfuse/rng.hpp"

namespace chainfuse {

/// Weighted samples over the full joint-angle vector. log_weights are kept
/// normalized (logsumexp = 0).
struct ParticleSet {
  Eigen::MatrixXd states;      // L x n
  Eigen::VectorXd log_weights; // length L, normalized
  std::uint64_t rng_seed = 0;

  int count() const { return static_cast<int>(states.rows()); }
  int dimension() const { return static_cast<int>(states.cols()); }
};

struct CpfConfig {
  enum class DimensionOrder { ModelOrder, RandomPerUpdate };
  enum class PixelSubset { SilhouetteUnion, FullImage };

  int particle_count = 200;
  DimensionOrder dimension_order = DimensionOrder::RandomPerUpdate;
  double resample_threshold = 0.5;  // ESS fraction triggering resampling
  PixelSubset pixel_subset = PixelSubset::SilhouetteUnion;
  int probe_renders = 16;           // prior samples used to build the silhouette union
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (particle_count < 2) throw std::invalid_argument("particle_count must be >= 2");
    if (!(resample_threshold > 0.0) || resample_threshold > 1.0)
      throw std::invalid_argument("resample_threshold must be in (0,1]");
    if (probe_renders < 1) throw std::invalid_argument("probe_renders must be >= 1");
  }
};

/// Shifts log weights so that logsumexp(w) = 0; returns false if every
/// weight is -inf.
inline bool normalize_log_weights(Eigen::VectorXd& log_w) {
  const double m = log_w.maxCoeff();
  if (!std::isfinite(m)) return false;
  double sum = 0.0;
  for (int i = 0; i < log_w.size(); ++i) sum += std::exp(log_w[i] - m);
  const double lse = m + std::log(sum);
  log_w.array() -= lse;
  return true;
}

/// Effective sample size 1 / sum(w^2) of normalized log weights.
inline double effective_sample_size(const Eigen::VectorXd& log_w) {
  double s2 = 0.0;
  for (int i = 0; i < log_w.size(); ++i) {
    const double w = std::exp(log_w[i]);
    s2 += w * w;
  }
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

/// Systematic resampling: selects indices with the comb (i + u0)/L over the
/// cumulative normalized weights; u0 in [0,1).
inline std::vector<int> systematic_resample_indices(const Eigen::VectorXd& log_w, double u0) {
  const int L = static_cast<int>(log_w.size());
  std::vector<int> idx(L);
  double cum = std::exp(log_w[0]);
  int j = 0;
  for (int i = 0; i < L; ++i) {
    const double target = (i + u0) / L;
    while (cum < target && j + 1 < L) cum += std::exp(log_w[++j]);
    idx[i] = j;
  }
  return idx;
}

}  // namespace chainfuse

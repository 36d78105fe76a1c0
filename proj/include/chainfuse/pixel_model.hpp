#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "chainfuse/depth_image.hpp"
#include "chainfuse/render.hpp"

namespace chainfuse {

/// Parameters of the generative per-pixel depth model: a visible component
/// (truncated Gaussian around the rendered depth plus a uniform tail) mixed
/// with an occluded component (uniform between the sensor minimum and the
/// rendered depth, plus the same tail).
struct PixelModelParams {
  double sigma_z = 0.015;    // m, sensor + model noise std
  double p_occluded = 0.1;   // per-pixel occlusion prior
  double w_tail = 0.03;      // uniform outlier mass
  double z_min = 0.3;        // m
  double z_max = 5.0;        // m

  void validate() const {
    if (!(sigma_z > 0.0) || !(p_occluded >= 0.0) || p_occluded >= 1.0 ||
        !(w_tail >= 0.0) || w_tail >= 1.0 || !(z_min < z_max))
      throw std::invalid_argument("invalid pixel model parameters");
  }
};

namespace pixel_detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double truncated_normal_pdf(double z, double mean, double sigma, double lo, double hi) {
  if (z < lo || z > hi) return 0.0;
  const double norm =
      pixel_detail::normal_cdf((hi - mean) / sigma) - pixel_detail::normal_cdf((lo - mean) / sigma);
  if (!(norm > 0.0)) return 0.0;
  const double u = (z - mean) / sigma;
  return std::exp(-0.5 * u * u) / (sigma * std::sqrt(2.0 * M_PI)) / norm;
}

}  // namespace pixel_detail

/// Marginal pixel density p(z | rendered depth d), occlusion marginalized out.
/// d = +inf (ray misses the model) degenerates to the uniform sensor-range
/// density; z = NaN (no return) is handled by the log version.
inline double pixel_likelihood(double z, double d, const PixelModelParams& p) {
  const double range = p.z_max - p.z_min;
  const double range_u = (z >= p.z_min && z <= p.z_max) ? 1.0 / range : 0.0;
  if (!std::isfinite(d)) return range_u;  // occluder mixture with d clamped to z_max

  const double vis =
      (1.0 - p.w_tail) * pixel_detail::truncated_normal_pdf(z, d, p.sigma_z, p.z_min, p.z_max) +
      p.w_tail * range_u;

  // occluders live between the sensor minimum and the arm surface
  const double occ_hi = std::min(d, p.z_max);
  double occ_u;
  if (occ_hi - p.z_min > 1e-9)
    occ_u = (z >= p.z_min && z <= occ_hi) ? 1.0 / (occ_hi - p.z_min) : 0.0;
  else
    occ_u = range_u;  // no room for an occluder in front of d
  const double occl = (1.0 - p.w_tail) * occ_u + p.w_tail * range_u;

  return (1.0 - p.p_occluded) * vis + p.p_occluded * occl;
}

/// log p(z | d). NaN z is an uninformative missing return: log 1 = 0.
inline double pixel_log_likelihood(double z, double d, const PixelModelParams& p) {
  if (std::isnan(z)) return 0.0;
  if (!std::isfinite(z) || z < 0.0)
    throw std::domain_error("depth measurement must be NaN or finite non-negative");
  return std::log(pixel_likelihood(z, d, p));
}

/// Posterior probability that the pixel is occluded given the measurement.
/// Diagnostic only; never propagated to the next frame.
inline double posterior_occlusion(double z, double d, const PixelModelParams& p) {
  if (p.p_occluded == 0.0) return 0.0;
  if (std::isnan(z)) return p.p_occluded;  // no information
  const double range = p.z_max - p.z_min;
  const double range_u = (z >= p.z_min && z <= p.z_max) ? 1.0 / range : 0.0;
  const double occ_hi = std::isfinite(d) ? std::min(d, p.z_max) : p.z_max;
  double occ_u;
  if (occ_hi - p.z_min > 1e-9)
    occ_u = (z >= p.z_min && z <= occ_hi) ? 1.0 / (occ_hi - p.z_min) : 0.0;
  else
    occ_u = range_u;
  const double occl = (1.0 - p.w_tail) * occ_u + p.w_tail * range_u;
  const double total = pixel_likelihood(z, d, p);
  if (!(total > 0.0)) return p.p_occluded;
  return std::clamp(p.p_occluded * occl / total, 0.0, 1.0);
}

/// Image log-likelihood: sum of per-pixel terms over `subset` if given, else
/// over the rendered coverage (or every pixel with all_pixels). Kahan
/// summation keeps the result independent of pixel order to ~1e-9.
inline double image_log_likelihood(const DepthImage& observed, const RenderedDepth& rendered,
                                   const PixelModelParams& params,
                                   const std::vector<int>* subset = nullptr,
                                   bool all_pixels = false) {
  if (observed.width != rendered.width || observed.height != rendered.height)
    throw std::invalid_argument("observed/rendered dimensions differ");
  const size_t n = observed.pixel_count();
  double sum = 0.0, comp = 0.0;
  auto add = [&](double v) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  };
  auto term = [&](size_t i) {
    return pixel_log_likelihood(observed.depth[i], rendered.depth[i], params);
  };
  if (subset) {
    for (int i : *subset) {
      if (i < 0 || static_cast<size_t>(i) >= n)
        throw std::out_of_range("pixel subset index out of range");
      add(term(static_cast<size_t>(i)));
    }
  } else if (all_pixels) {
    for (size_t i = 0; i < n; ++i) add(term(i));
  } else {
    for (size_t i = 0; i < n; ++i)
      if (rendered.coverage[i]) add(term(i));
  }
  return sum;
}

}  // namespace chainfuse

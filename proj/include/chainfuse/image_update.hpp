#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "chainfuse/depth_image.hpp"
#include "chainfuse/encoder_filter.hpp"
#include "chainfuse/particle.hpp"
#include "chainfuse/pixel_model.hpp"
#include "chainfuse/render.hpp"
#include "chainfuse/rng.hpp"

namespace chainfuse {

struct Gaussian1 {
  double mean = 0.0;
  double var = 0.0;
  bool floored = false;  // variance floor applied during moment matching
};

/// Angle marginal of each joint belief (drop the bias row/column).
inline std::vector<Gaussian1> angle_prior_marginals(const BeliefVector& beliefs) {
  std::vector<Gaussian1> out(beliefs.size());
  for (int j = 0; j < beliefs.size(); ++j)
    out[j] = {beliefs.joints[j].mean[0], beliefs.joints[j].cov(0, 0), false};
  return out;
}

namespace cpf_detail {

/// Per-image-update evaluation state. The likelihood of a particle relative
/// to a fixed pixel subset S decomposes into a constant (all-miss) term plus
/// corrections on the pixels the particle's silhouette actually covers, so
/// each particle only pays for its own coverage. The constant cancels when
/// weights are normalized and is not computed.
struct SubsetEvaluator {
  const RenderContext* ctx = nullptr;
  PixelModelParams params;
  std::vector<std::int32_t> slot;     // per image pixel: index into S, or -1
  std::vector<double> obs;            // observed z per slot (finite)
  std::vector<double> miss_log;       // log p(z | miss) per slot
  std::vector<Eigen::Vector3d> dirs;  // pixel ray per slot
  // scratch
  std::vector<double> zbuf;
  std::vector<std::int32_t> touched;
  std::vector<render_detail::PixelRect> rects;

  void build(const RenderContext& context, const DepthImage& image,
             const PixelModelParams& p, const std::vector<std::uint8_t>* union_mask) {
    ctx = &context;
    params = p;
    const size_t n = image.pixel_count();
    slot.assign(n, -1);
    obs.clear();
    miss_log.clear();
    dirs.clear();
    for (size_t i = 0; i < n; ++i) {
      const float z = image.depth[i];
      if (std::isnan(z)) continue;  // uninformative for every particle
      if (union_mask && !(*union_mask)[i]) continue;
      slot[i] = static_cast<std::int32_t>(obs.size());
      obs.push_back(z);
      miss_log.push_back(pixel_log_likelihood(z, std::numeric_limits<double>::infinity(), p));
      dirs.push_back(context.ray(static_cast<int>(i)));
    }
    zbuf.assign(obs.size(), std::numeric_limits<double>::infinity());
    touched.clear();
  }

  int subset_size() const { return static_cast<int>(obs.size()); }

  /// Relative log-likelihood of a configuration (camera-space capsules).
  double evaluate(const std::vector<Capsule>& caps) {
    const auto& cam = ctx->camera();
    for (const Capsule& c : caps) {
      rects.clear();
      render_detail::capsule_pixel_rects(c, cam, rects);
      const render_detail::PreparedCapsule prepared(c);
      for (const auto& r : rects)
        for (int y = r.y0; y <= r.y1; ++y) {
          const std::int32_t* srow = slot.data() + static_cast<size_t>(y) * cam.width;
          for (int x = r.x0; x <= r.x1; ++x) {
            const std::int32_t s = srow[x];
            if (s < 0) continue;
            const double t = prepared.intersect(dirs[s]);
            if (t < zbuf[s]) {
              if (!std::isfinite(zbuf[s])) touched.push_back(s);
              zbuf[s] = t;
            }
          }
        }
    }
    double adj = 0.0;
    for (std::int32_t s : touched) {
      adj += pixel_log_likelihood(obs[s], zbuf[s], params) - miss_log[s];
      zbuf[s] = std::numeric_limits<double>::infinity();
    }
    touched.clear();
    return adj;
  }
};

}  // namespace cpf_detail

/// Coordinate-wise particle approximation of the angle posterior
/// p(a | z, history): particles start at the prior means; one joint at a
/// time is redrawn from its prior marginal and all particles are reweighted
/// with the image likelihood of their full configuration. Systematic
/// resampling runs between dimensions when the effective sample size drops
/// below the threshold, so the final weighting pass is never compounded by a
/// resample. Deterministic given cfg.rng_seed.
inline ParticleSet cpf_update(const BeliefVector& beliefs, const DepthImage& image,
                              const RenderContext& ctx, const PixelModelParams& params,
                              const CpfConfig& cfg) {
  cfg.validate();
  params.validate();
  if (std::abs(image.timestamp - beliefs.timestamp()) > 1e-6)
    throw FilterError("image/belief timestamp mismatch");
  const KinematicModel& model = ctx.model();
  const int n = beliefs.size();
  if (n != model.joint_count()) throw FilterError("belief/model joint count mismatch");
  const int L = cfg.particle_count;

  Rng rng(cfg.rng_seed);
  const auto marginals = angle_prior_marginals(beliefs);
  Eigen::VectorXd prior_mean(n), prior_std(n);
  for (int j = 0; j < n; ++j) {
    prior_mean[j] = marginals[j].mean;
    prior_std[j] = std::sqrt(std::max(marginals[j].var, 0.0));
  }

  // Pixel subset: silhouette union of prior-sampled probe renders, or the
  // whole image. NaN pixels never carry information and are always skipped.
  cpf_detail::SubsetEvaluator eval;
  if (cfg.pixel_subset == CpfConfig::PixelSubset::SilhouetteUnion) {
    std::vector<std::uint8_t> mask(image.pixel_count(), 0);
    RenderedDepth probe;
    for (int k = 0; k < cfg.probe_renders; ++k) {
      Eigen::VectorXd v = prior_mean;
      if (k > 0)
        for (int j = 0; j < n; ++j) v[j] = rng.normal(prior_mean[j], prior_std[j]);
      RenderScene scene{&model, v, {}};
      ctx.render_capsules(ctx.camera_space_capsules(scene), probe);
      for (size_t i = 0; i < mask.size(); ++i) mask[i] |= probe.coverage[i];
    }
    eval.build(ctx, image, params, &mask);
  } else {
    eval.build(ctx, image, params, nullptr);
  }

  Eigen::MatrixXd particles = prior_mean.transpose().replicate(L, 1);
  Eigen::VectorXd log_w = Eigen::VectorXd::Zero(L);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (cfg.dimension_order == CpfConfig::DimensionOrder::RandomPerUpdate) {
    for (int i = n - 1; i > 0; --i) {
      const int k = static_cast<int>(rng.uniform() * (i + 1));
      std::swap(order[i], order[std::min(k, i)]);
    }
  }

  RenderScene scene{&model, Eigen::VectorXd(), {}};
  Eigen::MatrixXd resampled;
  std::vector<int> strata;
  for (int step = 0; step < n; ++step) {
    const int dim = order[step];

    if (step > 0 && effective_sample_size(log_w) < cfg.resample_threshold * L) {
      const auto idx = systematic_resample_indices(log_w, rng.uniform());
      resampled.resize(L, n);
      for (int l = 0; l < L; ++l) resampled.row(l) = particles.row(idx[l]);
      particles.swap(resampled);
      log_w.setZero();
    }

    // stratified (Latin-hypercube style) redraw from the prior marginal: a
    // shuffled stratum per particle with a common random offset. Exact draws
    // from the marginal with far lower Monte-Carlo variance than iid.
    {
      strata.resize(L);
      std::iota(strata.begin(), strata.end(), 0);
      for (int i = L - 1; i > 0; --i) {
        const int k = static_cast<int>(rng.uniform() * (i + 1));
        std::swap(strata[i], strata[std::min(k, i)]);
      }
      const double u0 = rng.uniform();
      for (int l = 0; l < L; ++l)
        particles(strata[l], dim) =
            prior_mean[dim] + prior_std[dim] * normal_quantile((l + u0) / L);
    }

    for (int l = 0; l < L; ++l) {
      scene.angles = particles.row(l);
      log_w[l] = eval.evaluate(ctx.camera_space_capsules(scene));
      if (std::isnan(log_w[l]) || log_w[l] == std::numeric_limits<double>::infinity())
        throw FilterError("non-finite particle likelihood");
    }
    if (!normalize_log_weights(log_w)) throw FilterError("all particle likelihoods vanished");
  }

  return ParticleSet{std::move(particles), std::move(log_w), cfg.rng_seed};
}

inline ParticleSet cpf_update(const BeliefVector& beliefs, const DepthImage& image,
                              const KinematicModel& model, const PixelModelParams& params,
                              const CpfConfig& cfg) {
  RenderContext ctx(model);
  return cpf_update(beliefs, image, ctx, params, cfg);
}

/// Weighted first and second central moments per joint. With exactly uniform
/// weights this reduces to the plain 1/L sums.
inline std::vector<Gaussian1> moment_match(const ParticleSet& ps) {
  const int L = ps.count();
  const int n = ps.dimension();
  if (L < 2) throw std::invalid_argument("need at least two particles");
  constexpr double kVarFloor = 1e-12;

  bool uniform = true;
  for (int l = 1; l < L && uniform; ++l) uniform = ps.log_weights[l] == ps.log_weights[0];

  std::vector<Gaussian1> out(n);
  for (int j = 0; j < n; ++j) {
    double mean = 0.0, var = 0.0;
    if (uniform) {
      for (int l = 0; l < L; ++l) mean += ps.states(l, j);
      mean /= L;
      for (int l = 0; l < L; ++l) {
        const double d = ps.states(l, j) - mean;
        var += d * d;
      }
      var /= L;
    } else {
      for (int l = 0; l < L; ++l) mean += std::exp(ps.log_weights[l]) * ps.states(l, j);
      for (int l = 0; l < L; ++l) {
        const double d = ps.states(l, j) - mean;
        var += std::exp(ps.log_weights[l]) * d * d;
      }
    }
    out[j].mean = mean;
    out[j].floored = var < kVarFloor;
    out[j].var = out[j].floored ? kVarFloor : var;
  }
  return out;
}

/// Replaces the angle marginal of a joint belief while preserving the bias
/// conditional p(b | a) exactly. With prior covariance [[Saa,Sab],[Sab,Sbb]]
/// and gain k = Sab/Saa, the update is written via the ratio
/// rho = var'/Saa so that an unchanged angle marginal is a bit-exact fixed
/// point.
inline JointBelief recombine_bias(const JointBelief& prior, const Gaussian1& angle_post) {
  const double Saa = prior.cov(0, 0);
  const double Sab = prior.cov(0, 1);
  const double Sbb = prior.cov(1, 1);
  if (!(Saa >= 1e-15)) throw FilterError("prior angle variance too small to recombine");
  if (!(angle_post.var > 0.0)) throw FilterError("angle posterior variance must be positive");
  const double k = Sab / Saa;
  const double rho = angle_post.var / Saa;
  JointBelief out = prior;
  out.mean[0] = angle_post.mean;
  out.mean[1] = prior.mean[1] + k * (angle_post.mean - prior.mean[0]);
  out.cov(0, 0) = angle_post.var;
  out.cov(0, 1) = Sab * rho;
  out.cov(1, 0) = out.cov(0, 1);
  out.cov(1, 1) = Sbb + k * Sab * (rho - 1.0);
  return out;
}

/// Full image update: CPF over the angles, Gaussian projection by moment
/// matching, then per-joint recombination of the bias conditional. Belief
/// timestamps are unchanged (the image carries the same stamp).
inline BeliefVector image_update_full(const BeliefVector& beliefs, const DepthImage& image,
                                      const RenderContext& ctx, const PixelModelParams& params,
                                      const CpfConfig& cfg) {
  const ParticleSet ps = cpf_update(beliefs, image, ctx, params, cfg);
  const auto moments = moment_match(ps);
  BeliefVector out = beliefs;
  for (int j = 0; j < beliefs.size(); ++j)
    out.joints[j] = recombine_bias(beliefs.joints[j], moments[j]);
  return out;
}

inline BeliefVector image_update_full(const BeliefVector& beliefs, const DepthImage& image,
                                      const KinematicModel& model, const PixelModelParams& params,
                                      const CpfConfig& cfg) {
  RenderContext ctx(model);
  return image_update_full(beliefs, image, ctx, params, cfg);
}

}  // namespace chainfuse

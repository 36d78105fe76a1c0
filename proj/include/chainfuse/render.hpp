#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "chainfuse/kinematics.hpp"
#include "chainfuse/model.hpp"

namespace chainfuse {

/// Depth predicted by the model: range along the pinhole ray through each
/// pixel center, +inf where the ray misses all capsules.
struct RenderedDepth {
  int width = 0;
  int height = 0;
  std::vector<double> depth;           // +inf on miss
  std::vector<std::uint8_t> coverage;  // true iff depth finite

  double at(int x, int y) const { return depth[static_cast<size_t>(y) * width + x]; }
};

/// A model configuration plus extra capsules given directly in the camera
/// frame (used by the simulator to place external occluders).
struct RenderScene {
  const KinematicModel* model = nullptr;
  Eigen::VectorXd angles;
  std::vector<Capsule> camera_capsules;
};

namespace render_detail {

constexpr double kNearClip = 1e-3;


struct PixelRect {
  int x0, x1, y0, y1;  // inclusive
  bool empty() const { return x1 < x0 || y1 < y0; }
};

/// Capsule with the ray-independent intersection terms precomputed (rays all
/// start at the camera origin, so everything except the direction is fixed).
struct PreparedCapsule {
  Eigen::Vector3d A, B, n;
  double r2 = 0.0;
  double nn = 0.0, inv_nn = 0.0, An = 0.0;
  double cyl_c = 0.0;  // A.A - An^2/nn - r^2
  double sphere_a_c = 0.0, sphere_b_c = 0.0;  // |C|^2 - r^2
  bool degenerate = false;     // segment collapses to a sphere
  bool origin_inside = false;

  explicit PreparedCapsule(const Capsule& cap) {
    A = cap.a;
    B = cap.b;
    n = cap.b - cap.a;
    r2 = cap.radius * cap.radius;
    nn = n.squaredNorm();
    degenerate = nn <= 0.0;
    sphere_a_c = A.squaredNorm() - r2;
    sphere_b_c = B.squaredNorm() - r2;
    if (!degenerate) {
      inv_nn = 1.0 / nn;
      An = A.dot(n);
      cyl_c = A.squaredNorm() - An * An * inv_nn - r2;
      const double s0 = std::clamp(-An * inv_nn, 0.0, 1.0);
      origin_inside = (A + s0 * n).squaredNorm() <= r2;
    } else {
      origin_inside = sphere_a_c <= 0.0;
    }
  }

  /// First t >= 0 where the unit ray from the origin meets the surface;
  /// +inf on miss, 0 if the origin is inside.
  double intersect(const Eigen::Vector3d& dir) const {
    const double inf = std::numeric_limits<double>::infinity();
    if (origin_inside) return 0.0;
    double best = inf;
    const double Ad = A.dot(dir);
    if (!degenerate) {
      const double nd = n.dot(dir);
      const double a = 1.0 - nd * nd * inv_nn;
      if (a > 1e-14) {
        const double half_b = Ad - An * nd * inv_nn;
        const double disc = half_b * half_b - a * cyl_c;
        if (disc >= 0.0) {
          const double t = (half_b - std::sqrt(disc)) / a;
          if (t >= 0.0) {
            const double s = (t * nd - An) * inv_nn;
            if (s >= 0.0 && s <= 1.0) best = t;
          }
        }
      }
      {
        const double disc = Ad * Ad - sphere_a_c;
        if (disc >= 0.0) {
          const double t = Ad - std::sqrt(disc);
          if (t >= 0.0 && t < best) best = t;
        }
      }
      {
        const double Bd = B.dot(dir);
        const double disc = Bd * Bd - sphere_b_c;
        if (disc >= 0.0) {
          const double t = Bd - std::sqrt(disc);
          if (t >= 0.0 && t < best) best = t;
        }
      }
    } else {
      const double disc = Ad * Ad - sphere_a_c;
      if (disc >= 0.0) {
        const double t = Ad - std::sqrt(disc);
        if (t >= 0.0) best = t;
      }
    }
    return best;
  }
};

/// Conservative image-space bounding rectangles of a camera-frame capsule.
/// Long capsules are split into chunks so diagonal limbs don't produce huge
/// boxes; every returned rect still gets tested against the full capsule.
inline void capsule_pixel_rects(const Capsule& cap, const CameraIntrinsics& cam,
                                std::vector<PixelRect>& out) {
  const double len = (cap.b - cap.a).norm();
  const int chunks = std::clamp(static_cast<int>(std::ceil(len / (3.0 * cap.radius))), 1, 8);

  auto sphere_bounds = [&](const Eigen::Vector3d& C, double r, double& x0, double& x1,
                           double& y0, double& y1, bool& behind, bool& wide) {
    behind = C.z() + r <= kNearClip;
    if (behind) return;
    wide = C.z() - r <= kNearClip;  // straddles the near plane
    if (wide) return;
    const double zlo = C.z() - r, zhi = C.z() + r;
    auto span = [&](double v, double f, double c, double& lo, double& hi) {
      const double m1 = (v - r) / zlo, m2 = (v - r) / zhi, m3 = (v + r) / zlo, m4 = (v + r) / zhi;
      lo = c + f * std::min(std::min(m1, m2), std::min(m3, m4));
      hi = c + f * std::max(std::max(m1, m2), std::max(m3, m4));
    };
    span(C.x(), cam.fx, cam.cx, x0, x1);
    span(C.y(), cam.fy, cam.cy, y0, y1);
  };

  for (int k = 0; k < chunks; ++k) {
    const Eigen::Vector3d p = cap.a + (cap.b - cap.a) * (static_cast<double>(k) / chunks);
    const Eigen::Vector3d q = cap.a + (cap.b - cap.a) * (static_cast<double>(k + 1) / chunks);
    double x0 = 0, x1 = 0, y0 = 0, y1 = 0, u0 = 0, u1 = 0, v0 = 0, v1 = 0;
    bool behind_p = false, wide_p = false, behind_q = false, wide_q = false;
    sphere_bounds(p, cap.radius, x0, x1, y0, y1, behind_p, wide_p);
    sphere_bounds(q, cap.radius, u0, u1, v0, v1, behind_q, wide_q);
    if (behind_p && behind_q) continue;
    PixelRect r;
    if (wide_p || wide_q || behind_p || behind_q) {
      // part of the chunk is at or behind the near plane: be conservative
      r = {0, cam.width - 1, 0, cam.height - 1};
    } else {
      const double lox = std::min(x0, u0), hix = std::max(x1, u1);
      const double loy = std::min(y0, v0), hiy = std::max(y1, v1);
      r.x0 = std::max(0, static_cast<int>(std::floor(lox)));
      r.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(hix)));
      r.y0 = std::max(0, static_cast<int>(std::floor(loy)));
      r.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(hiy)));
    }
    if (!r.empty()) out.push_back(r);
  }
}

/// First t >= 0 at which the ray t*dir (unit dir, origin at the camera)
/// meets the capsule surface; +inf on miss, 0 if the origin is inside.
inline double ray_capsule_intersect(const Eigen::Vector3d& dir, const Capsule& cap) {
  return PreparedCapsule(cap).intersect(dir);
}

}  // namespace render_detail

/// Precomputed per-pixel unit ray directions for one camera. Build once per
/// model and reuse; construction is the only non-trivial cost.
class RenderContext {
 public:
  explicit RenderContext(const KinematicModel& model) : model_(&model) {
    const auto& c = model.camera();
    dirs_.resize(static_cast<size_t>(c.width) * c.height);
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) {
        Eigen::Vector3d d((x - c.cx) / c.fx, (y - c.cy) / c.fy, 1.0);
        dirs_[static_cast<size_t>(y) * c.width + x] = d.normalized();
      }
  }

  const KinematicModel& model() const { return *model_; }
  const CameraIntrinsics& camera() const { return model_->camera(); }
  const Eigen::Vector3d& ray(int pixel) const { return dirs_[pixel]; }
  const Eigen::Vector3d& ray(int x, int y) const {
    return dirs_[static_cast<size_t>(y) * camera().width + x];
  }

  /// All scene capsules transformed into the camera frame for a given
  /// configuration (model links first, then the scene extras).
  std::vector<Capsule> camera_space_capsules(const RenderScene& scene) const {
    const KinematicModel& m = *scene.model;
    const auto poses = forward_kinematics(m, {scene.angles, 0.0});
    const RigidTransform world_to_cam = poses[m.camera_link()].inverse();
    std::vector<Capsule> out;
    for (int l = 0; l < m.link_count(); ++l) {
      const RigidTransform t = world_to_cam * poses[l];
      for (const Capsule& c : m.link_capsules(l))
        out.push_back({t * c.a, t * c.b, c.radius});
    }
    out.insert(out.end(), scene.camera_capsules.begin(), scene.camera_capsules.end());
    return out;
  }

  /// Rasterizes camera-frame capsules into a dense z-buffer of ray ranges.
  void render_capsules(const std::vector<Capsule>& caps, RenderedDepth& out) const {
    const auto& c = camera();
    out.width = c.width;
    out.height = c.height;
    out.depth.assign(static_cast<size_t>(c.width) * c.height,
                     std::numeric_limits<double>::infinity());
    std::vector<render_detail::PixelRect> rects;
    for (const Capsule& cap : caps) {
      rects.clear();
      render_detail::capsule_pixel_rects(cap, c, rects);
      const render_detail::PreparedCapsule prepared(cap);
      for (const auto& r : rects)
        for (int y = r.y0; y <= r.y1; ++y) {
          double* row = out.depth.data() + static_cast<size_t>(y) * c.width;
          for (int x = r.x0; x <= r.x1; ++x) {
            const double t = prepared.intersect(ray(x, y));
            if (t < row[x]) row[x] = t;
          }
        }
    }
    out.coverage.resize(out.depth.size());
    for (size_t i = 0; i < out.depth.size(); ++i)
      out.coverage[i] = std::isfinite(out.depth[i]) ? 1 : 0;
  }

 private:
  const KinematicModel* model_;
  std::vector<Eigen::Vector3d> dirs_;
};

inline RenderedDepth render(const RenderContext& ctx, const RenderScene& scene) {
  RenderedDepth out;
  ctx.render_capsules(ctx.camera_space_capsules(scene), out);
  return out;
}

inline RenderedDepth render(const KinematicModel& model, const JointVector& angles) {
  RenderContext ctx(model);
  RenderScene scene{&model, angles.values, {}};
  return render(ctx, scene);
}

}  // namespace chainfuse

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "chainfuse/depth_image.hpp"
#include "chainfuse/render.hpp"
#include "chainfuse/simulator.hpp"
#include "support/oracles.hpp"

using namespace chainfuse;

namespace {

KinematicModel camera_only_model(int w = 64, int h = 48, double f = 80.0) {
  // one dummy joint so the model is non-empty; geometry comes in through
  // RenderScene::camera_capsules
  KinematicModel::Description d;
  d.joints.push_back({"j1", "base", "l1", RigidTransform::identity(), {0, 0, 1},
                      JointKind::Revolute, true});
  d.camera_mount_link = "base";
  d.camera = {f, f, w / 2.0, h / 2.0, w, h, 0.1, 10.0};
  return KinematicModel::from_description(d);
}

}  // namespace

TEST_CASE("sphere capsule on the optical axis") {
  const KinematicModel m = camera_only_model();
  RenderContext ctx(m);
  RenderScene scene{&m, Eigen::VectorXd::Zero(1), {}};
  scene.camera_capsules.push_back({{0, 0, 1.0}, {0, 0, 1.0}, 0.1});
  const RenderedDepth r = render(ctx, scene);
  REQUIRE(r.at(32, 24) == Catch::Approx(0.9).margin(1e-9));
  REQUIRE(r.coverage[24 * 64 + 32] == 1);
}

TEST_CASE("empty scene renders no coverage") {
  const KinematicModel m = camera_only_model();
  RenderContext ctx(m);
  RenderScene scene{&m, Eigen::VectorXd::Zero(1), {}};
  const RenderedDepth r = render(ctx, scene);
  for (size_t i = 0; i < r.depth.size(); ++i) {
    REQUIRE(std::isinf(r.depth[i]));
    REQUIRE(r.coverage[i] == 0);
  }
}

TEST_CASE("analytic intersection matches ray-marching oracle") {
  const KinematicModel m = camera_only_model();
  RenderContext ctx(m);
  std::mt19937 gen(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Capsule> caps;
  for (int i = 0; i < 5; ++i) {
    Capsule c;
    c.a = Eigen::Vector3d(0.6 * u(gen), 0.5 * u(gen), 1.2 + 0.5 * u(gen));
    c.b = c.a + Eigen::Vector3d(0.4 * u(gen), 0.3 * u(gen), 0.3 * u(gen));
    c.radius = 0.05 + 0.05 * std::abs(u(gen));
    caps.push_back(c);
  }
  RenderScene scene{&m, Eigen::VectorXd::Zero(1), caps};
  const RenderedDepth r = render(ctx, scene);

  std::uniform_int_distribution<int> px(0, 63), py(0, 47);
  int compared = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int x = px(gen), y = py(gen);
    const Eigen::Vector3d dir = ctx.ray(x, y);
    // skip grazing rays: the march can step over sub-0.1mm penetrations
    double margin = -1.0;
    for (const auto& c : caps) margin = std::max(margin, oracle::ray_capsule_margin(dir, c, 3.0));
    if (std::abs(margin) < 1e-3) continue;
    const double march = oracle::ray_march_depth(dir, caps, 3.0);
    const double analytic = r.at(x, y);
    if (std::isinf(march)) {
      REQUIRE(std::isinf(analytic));
    } else {
      REQUIRE(analytic == Catch::Approx(march).margin(5e-4));
    }
    ++compared;
  }
  REQUIRE(compared > 100);
}

TEST_CASE("renderer is deterministic") {
  const KinematicModel m = inject_virtual_joints(default_arm_model());
  RenderContext ctx(m);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(13);
  a.head(7) << 0.2, -0.1, 0.15, 0.5, -0.3, 0.1, 0.2;
  RenderScene scene{&m, a, {}};
  const RenderedDepth r1 = render(ctx, scene);
  const RenderedDepth r2 = render(ctx, scene);
  REQUIRE(r1.depth == r2.depth);
  REQUIRE(r1.coverage == r2.coverage);
}

TEST_CASE("rect culling agrees with exhaustive intersection") {
  const KinematicModel m = inject_virtual_joints(default_arm_model());
  RenderContext ctx(m);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(13);
  a.head(7) << 0.3, -0.2, 0.1, 0.6, 0.2, -0.1, 0.05;
  RenderScene scene{&m, a, {}};
  const auto caps = ctx.camera_space_capsules(scene);
  const RenderedDepth r = render(ctx, scene);
  const auto& cam = m.camera();
  for (int y = 0; y < cam.height; y += 3)
    for (int x = 0; x < cam.width; x += 3) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : caps)
        best = std::min(best, render_detail::ray_capsule_intersect(ctx.ray(x, y), c));
      REQUIRE(r.at(x, y) == best);
    }
}

TEST_CASE("depth frame files round-trip") {
  DepthImage img;
  img.width = 17;
  img.height = 9;
  img.timestamp = 12.375;
  img.depth.resize(17 * 9);
  std::mt19937 gen(9);
  std::uniform_real_distribution<double> u(0.3, 4.0);
  for (auto& z : img.depth)
    z = (gen() % 5 == 0) ? std::numeric_limits<float>::quiet_NaN() : static_cast<float>(u(gen));
  const auto path = std::filesystem::temp_directory_path() / "chainfuse_test_frame.dpth";
  save_depth_frame(path, img);
  const DepthImage back = load_depth_frame(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  REQUIRE(back.timestamp == img.timestamp);
  for (size_t i = 0; i < img.depth.size(); ++i) {
    if (std::isnan(img.depth[i]))
      REQUIRE(std::isnan(back.depth[i]));
    else
      REQUIRE(back.depth[i] == img.depth[i]);
  }
  std::filesystem::remove(path);
}

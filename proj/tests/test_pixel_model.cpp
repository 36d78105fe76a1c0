#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "chainfuse/pixel_model.hpp"
#include "support/oracles.hpp"

using namespace chainfuse;

TEST_CASE("gaussian peak value at z = d") {
  PixelModelParams p;
  p.sigma_z = 0.01;
  p.p_occluded = 0.0;
  p.w_tail = 0.0;
  p.z_min = 0.1;
  p.z_max = 10.0;
  const double got = pixel_log_likelihood(1.0, 1.0, p);
  const double expect = std::log(1.0 / (0.01 * std::sqrt(2.0 * M_PI)));
  REQUIRE(got == Catch::Approx(expect).margin(1e-2));
  REQUIRE(expect == Catch::Approx(3.6862).margin(1e-3));
}

TEST_CASE("occlusion prior thickens the near tail") {
  PixelModelParams lo, hi;
  lo.sigma_z = hi.sigma_z = 0.01;
  lo.w_tail = hi.w_tail = 0.02;
  lo.z_min = hi.z_min = 0.3;
  lo.z_max = hi.z_max = 5.0;
  lo.p_occluded = 0.1;
  hi.p_occluded = 0.4;
  const double d = 1.5;
  const double z = d - 0.3;
  REQUIRE(pixel_log_likelihood(z, d, hi) > pixel_log_likelihood(z, d, lo));
}

TEST_CASE("marginal density integrates to one") {
  PixelModelParams p;
  p.p_occluded = 0.3;
  p.sigma_z = 0.02;
  p.w_tail = 0.05;
  p.z_min = 0.3;
  p.z_max = 5.0;
  const double d = 1.2;
  const double mass = oracle::trapezoid([&](double z) { return pixel_likelihood(z, d, p); },
                                        p.z_min, p.z_max, 100000);
  REQUIRE(mass == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("normalization holds over a parameter grid") {
  for (double p_occ : {0.0, 0.3, 0.6})
    for (double sigma : {0.005, 0.02, 0.05})
      for (double tail : {0.0, 0.05, 0.2}) {
        PixelModelParams p;
        p.p_occluded = p_occ;
        p.sigma_z = sigma;
        p.w_tail = tail;
        p.z_min = 0.3;
        p.z_max = 5.0;
        for (double d : {0.7, 2.0}) {
          const double mass = oracle::trapezoid(
              [&](double z) { return pixel_likelihood(z, d, p); }, p.z_min, p.z_max, 100000);
          INFO("p_occ=" << p_occ << " sigma=" << sigma << " tail=" << tail << " d=" << d);
          REQUIRE(mass == Catch::Approx(1.0).margin(1e-3));
        }
      }
}

TEST_CASE("density peaks at the rendered depth, peak shrinks with occlusion prior") {
  PixelModelParams p;
  p.sigma_z = 0.02;
  p.w_tail = 0.05;
  p.z_min = 0.3;
  p.z_max = 5.0;
  const double d = 1.2;
  double prev_peak = std::numeric_limits<double>::infinity();
  for (double p_occ : {0.0, 0.2, 0.5}) {
    p.p_occluded = p_occ;
    double best_z = 0, best = -1;
    const int bins = 20000;
    for (int i = 0; i <= bins; ++i) {
      const double z = p.z_min + (p.z_max - p.z_min) * i / bins;
      const double v = pixel_likelihood(z, d, p);
      if (v > best) {
        best = v;
        best_z = z;
      }
    }
    REQUIRE(std::abs(best_z - d) <= (p.z_max - p.z_min) / bins + 1e-12);
    REQUIRE(best < prev_peak);
    prev_peak = best;
  }
}

TEST_CASE("near-tail density exceeds the bare uniform tail") {
  PixelModelParams p;
  p.sigma_z = 0.02;
  p.p_occluded = 0.25;
  p.w_tail = 0.05;
  p.z_min = 0.3;
  p.z_max = 5.0;
  const double d = 2.0;
  const double tail_only = (1.0 - p.p_occluded) * p.w_tail / (p.z_max - p.z_min);
  for (double z = p.z_min; z < d - 3 * p.sigma_z; z += 0.05)
    REQUIRE(pixel_likelihood(z, d, p) > tail_only);
}

TEST_CASE("missing return and missing render") {
  PixelModelParams p;
  REQUIRE(pixel_log_likelihood(std::numeric_limits<double>::quiet_NaN(), 1.0, p) == 0.0);
  // d = inf: uniform over the sensor range
  const double got = pixel_log_likelihood(1.0, std::numeric_limits<double>::infinity(), p);
  REQUIRE(got == Catch::Approx(std::log(1.0 / (p.z_max - p.z_min))).margin(1e-12));
  REQUIRE_THROWS_AS(pixel_log_likelihood(-0.5, 1.0, p), std::domain_error);
  REQUIRE_THROWS_AS(pixel_log_likelihood(-std::numeric_limits<double>::infinity(), 1.0, p),
                    std::domain_error);
}

TEST_CASE("posterior occlusion") {
  PixelModelParams p;
  p.sigma_z = 0.01;
  p.p_occluded = 0.3;
  p.w_tail = 0.01;
  p.z_min = 0.3;
  p.z_max = 5.0;

  SECTION("measurement at the peak explains the pixel") {
    REQUIRE(posterior_occlusion(1.2, 1.2, p) < p.p_occluded);
  }
  SECTION("measurement well in front is almost surely an occluder") {
    REQUIRE(posterior_occlusion(1.2 - 0.5, 1.2, p) > 0.99);
  }
  SECTION("zero prior forces zero posterior") {
    p.p_occluded = 0.0;
    REQUIRE(posterior_occlusion(0.7, 1.2, p) == 0.0);
  }
}

TEST_CASE("image log-likelihood sums per-pixel terms") {
  PixelModelParams p;
  p.sigma_z = 0.01;
  p.p_occluded = 0.0;
  p.w_tail = 0.0;
  p.z_min = 0.1;
  p.z_max = 10.0;

  DepthImage obs;
  obs.width = 10;
  obs.height = 10;
  obs.depth.assign(100, 1.0f);
  RenderedDepth ren;
  ren.width = 10;
  ren.height = 10;
  ren.depth.assign(100, 1.0);
  ren.coverage.assign(100, 1);

  SECTION("empty subset gives zero") {
    std::vector<int> none;
    REQUIRE(image_log_likelihood(obs, ren, p, &none) == 0.0);
  }

  SECTION("100 identical covered pixels sum the peak value") {
    const double total = image_log_likelihood(obs, ren, p);
    REQUIRE(total == Catch::Approx(368.626).margin(1e-2));
  }

  SECTION("matches independent per-pixel sum on random images") {
    std::mt19937 gen(31);
    std::uniform_real_distribution<double> u(0.3, 3.0);
    p.p_occluded = 0.2;
    p.w_tail = 0.05;
    for (size_t i = 0; i < 100; ++i) {
      obs.depth[i] = static_cast<float>(u(gen));
      ren.depth[i] = (gen() % 4 == 0) ? std::numeric_limits<double>::infinity() : u(gen);
      ren.coverage[i] = std::isfinite(ren.depth[i]);
    }
    const double total = image_log_likelihood(obs, ren, p, nullptr, true);
    double expect = 0.0;
    for (size_t i = 0; i < 100; ++i)
      expect += pixel_log_likelihood(obs.depth[i], ren.depth[i], p);
    REQUIRE(total == Catch::Approx(expect).margin(1e-9));
  }

  SECTION("subset out of range throws") {
    std::vector<int> bad{100};
    REQUIRE_THROWS_AS(image_log_likelihood(obs, ren, p, &bad), std::out_of_range);
  }
}

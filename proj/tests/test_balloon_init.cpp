// Copyright 2026 The shps Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "shps/balloon_init.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>
#include <random>

namespace shps {
namespace {

double largest_singular_value(const GradientOperator& d) {
  const Eigen::MatrixXd m(d.stacked());
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

PixelDomain disk(int size, double radius) {
  const double c = (size - 1) / 2.0;
  return PixelDomain::from_predicate(size, size, [&](int u, int v) { return std::hypot(u - c, v - c) < radius; });
}

/// Spherical cap of height h over a disk of radius r_eff, sampled on the mask.
Eigen::VectorXd cap_profile(const PixelDomain& d, double r_eff, double h) {
  const double c = (d.width() - 1) / 2.0;
  const double rs = (r_eff * r_eff + h * h) / (2 * h);
  Eigen::VectorXd z(d.size());
  for (int j = 0; j < d.size(); ++j) {
    const double r = std::hypot(d.pixel(j).u - c, d.pixel(j).v - c);
    z[j] = std::sqrt(rs * rs - r * r) - (rs - h);
  }
  return z;
}

TEST(SpectralNorm, MatchesDenseSvd) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution keep(0.7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::uint8_t> mask(12 * 9);
    for (auto& m : mask) m = keep(rng);
    mask[0] = 1;
    const PixelDomain d(12, 9, mask);
    for (const GradientOperator& g : {build_gradient_operator(d), build_dirichlet_gradient_operator(d)}) {
      const double dense = largest_singular_value(g);
      EXPECT_NEAR(spectral_norm_gradient(g, 1e-12), dense, 1e-5 * dense);
    }
  }
}

TEST(SpectralNorm, SmallCases) {
  const auto single = PixelDomain::from_predicate(3, 3, [](int u, int v) { return u == 1 && v == 1; });
  EXPECT_EQ(spectral_norm_gradient(build_gradient_operator(single)), 0.0);
  // Both pixels of a 1x2 mask get the row (-1, 1) under the mixed stencil.
  const PixelDomain pair = PixelDomain::full(2, 1);
  EXPECT_NEAR(spectral_norm_gradient(build_gradient_operator(pair), 1e-12), 2.0, 1e-9);
  EXPECT_NEAR(largest_singular_value(build_gradient_operator(pair)), 2.0, 1e-12);
}

TEST(SpectralNorm, LargeRectangleApproachesRootEight) {
  const PixelDomain d = PixelDomain::full(48, 40);
  const double s = spectral_norm_gradient(build_dirichlet_gradient_operator(d), 1e-9);
  EXPECT_LE(s, std::sqrt(8.0) + 1e-9);
  EXPECT_GT(s, 0.99 * std::sqrt(8.0));
}

TEST(Balloon, VolumeExactAfterEveryIteration) {
  const PixelDomain d = disk(40, 17);
  const double volume = 3.3 * d.size();
  int calls = 0;
  BalloonOptions opt;
  opt.max_iters = 300;
  balloon(d, volume, opt, [&](int, const Eigen::VectorXd& z) {
    ++calls;
    EXPECT_NEAR(z.sum(), volume, 1e-10 * volume);
  });
  EXPECT_EQ(calls, 300);
}

TEST(Balloon, AreaNonIncreasing) {
  const PixelDomain d = disk(40, 17);
  const GradientOperator g = build_dirichlet_gradient_operator(d);
  double prev = INFINITY;
  int increases = 0;
  BalloonOptions opt;
  opt.max_iters = 3000;
  balloon(d, 4.0 * d.size(), opt, [&](int, const Eigen::VectorXd& z) {
    const double a = surface_area(g, z);
    if (a > prev * (1 + 1e-12)) ++increases;
    prev = a;
  });
  EXPECT_EQ(increases, 0);
}

TEST(Balloon, MatchesSphericalCap) {
  const PixelDomain d = disk(64, 28);
  const double h = 5.0;
  // z is pinned to zero at the first exterior pixel centres, half a pixel
  // beyond the outermost masked centres.
  const Eigen::VectorXd cap = cap_profile(d, 28.5, h);
  const BalloonResult r = balloon(d, cap.sum());
  EXPECT_TRUE(r.converged);
  const double rms = std::sqrt((r.depth.values - cap).squaredNorm() / d.size());
  EXPECT_LT(rms, 0.01 * h);
}

TEST(Balloon, FlatStartIsStationaryInTheInterior) {
  const PixelDomain d = disk(30, 13);
  BalloonOptions opt;
  opt.max_iters = 1;
  const BalloonResult r = balloon(d, 2.0 * d.size(), opt);
  const double c = (d.width() - 1) / 2.0;
  double lo = INFINITY;
  double hi = -INFINITY;
  for (int j = 0; j < d.size(); ++j) {
    if (std::hypot(d.pixel(j).u - c, d.pixel(j).v - c) < 10) {
      lo = std::min(lo, r.depth.values[j]);
      hi = std::max(hi, r.depth.values[j]);
    }
  }
  EXPECT_NEAR(hi - lo, 0.0, 1e-12);
}

TEST(Balloon, RejectsNonPositiveVolume) {
  EXPECT_THROW(balloon(disk(10, 4), 0.0), Error);
  EXPECT_THROW(init_depth_balloon(disk(10, 4), CameraIntrinsics{10, 10, 4.5, 4.5}, -1.0), Error);
}

TEST(OrthographicNormals, Examples) {
  const PixelDomain d = PixelDomain::full(3, 2);
  const GradientOperator g = build_gradient_operator(d);
  const NormalField flat = orthographic_normals(Eigen::VectorXd::Constant(6, 2.0), g);
  for (int j = 0; j < 6; ++j) EXPECT_EQ(flat.n.row(j), Eigen::RowVector3d(0, 0, -1));
  Eigen::VectorXd ramp(6);
  for (int j = 0; j < 6; ++j) ramp[j] = d.pixel(j).u;
  const NormalField n = orthographic_normals(ramp, g);
  for (int j = 0; j < 6; ++j) {
    EXPECT_NEAR((n.n.row(j) - Eigen::RowVector3d(1, 0, -1) / std::sqrt(2.0)).norm(), 0.0, 1e-15);
    EXPECT_NEAR(n.n.row(j).norm(), 1.0, 1e-15);
  }
}

TEST(LogPerspectiveGradient, FrontalAndPrincipalPoint) {
  const PixelDomain d = PixelDomain::full(5, 5);
  const CameraIntrinsics k{100, 80, 2, 2};
  NormalMatrix n(25, 3);
  n.rowwise() = Eigen::RowVector3d(0, 0, -1);
  const LogGradient g0 = log_perspective_gradient(n, k, d);
  EXPECT_EQ(g0.g_u.squaredNorm() + g0.g_v.squaredNorm(), 0.0);

  const Vec3 m = Vec3(0.3, -0.2, -0.9).normalized();
  n.rowwise() = m.transpose();
  const LogGradient g = log_perspective_gradient(n, k, d);
  const int j = d.index(2, 2);
  EXPECT_NEAR(g.g_u[j], m.x() / (k.f_u * -m.z()), 1e-15);
  EXPECT_NEAR(g.g_v[j], m.y() / (k.f_v * -m.z()), 1e-15);
}

TEST(LogPerspectiveGradient, GrazingPixelsFlagged) {
  const PixelDomain d = PixelDomain::full(2, 1);
  const CameraIntrinsics k{10, 10, 0, 0};
  NormalMatrix n(2, 3);
  n << 1, 0, 0, 0, 0, -1;
  // At u = 0 the denominator is n3 = 0.
  const LogGradient g = log_perspective_gradient(n, k, d);
  EXPECT_TRUE(g.degenerate[0]);
  EXPECT_FALSE(g.degenerate[1]);
  EXPECT_EQ(g.g_u[0], 0.0);
}

TEST(LogPerspectiveGradient, EqualsDepthGradientOverDepth) {
  // For n ~ n~[z] the denominator reduces to -z / |n~|, so g = (D z) / z.
  const double s = 40;
  const CameraIntrinsics k{s, s, 19.5, 19.5};
  const SyntheticShape shape = sphere_cap(40, 40, k);
  const GradientOperator d = build_gradient_operator(shape.domain);
  const NormalField n = perspective_normals(shape.depth, k, shape.domain);
  const LogGradient g = log_perspective_gradient(n.n, k, shape.domain);
  const Eigen::VectorXd& z = shape.depth.values;
  const Eigen::VectorXd eu = (d.d_u * z).cwiseQuotient(z);
  const Eigen::VectorXd ev = (d.d_v * z).cwiseQuotient(z);
  EXPECT_LT((g.g_u - eu).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((g.g_v - ev).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Integration, ConsistentFieldRoundTrip) {
  const PixelDomain d = disk(32, 14);
  const GradientOperator g = build_gradient_operator(d);
  Eigen::VectorXd f(d.size());
  for (int j = 0; j < d.size(); ++j) {
    const Pixel p = d.pixel(j);
    f[j] = std::sin(0.2 * p.u) * std::cos(0.15 * p.v) + 0.01 * p.u * p.v;
  }
  const IntegrationResult r = integrate_gradient(g.d_u * f, g.d_v * f, g);
  EXPECT_TRUE(r.converged);
  const Eigen::VectorXd expected = f.array() - f.mean();
  EXPECT_LT(std::sqrt((r.values - expected).squaredNorm() / d.size()), 1e-6);
}

TEST(Integration, ZeroField) {
  const PixelDomain d = disk(16, 6);
  const GradientOperator g = build_gradient_operator(d);
  const IntegrationResult r = integrate_gradient(Eigen::VectorXd::Zero(d.size()), Eigen::VectorXd::Zero(d.size()), g);
  EXPECT_EQ(r.values.squaredNorm(), 0.0);
}

TEST(Integration, MatchesDenseLeastSquares) {
  const PixelDomain d = PixelDomain::from_predicate(24, 20, [](int u, int v) { return std::hypot(u - 11.5, v - 9.5) < 9 || (u > 15 && v > 12); });
  const GradientOperator g = build_gradient_operator(d);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd gu(d.size());
  Eigen::VectorXd gv(d.size());
  for (int j = 0; j < d.size(); ++j) {
    gu[j] = gauss(rng);
    gv[j] = gauss(rng);
  }
  const IntegrationResult r = integrate_gradient(gu, gv, g);
  const Eigen::MatrixXd a(g.stacked());
  Eigen::VectorXd b(2 * d.size());
  b << gu, gv;
  Eigen::VectorXd oracle = a.completeOrthogonalDecomposition().solve(b);
  oracle.array() -= oracle.mean();
  EXPECT_LT((r.values - oracle).cwiseAbs().maxCoeff(), 1e-6);
  // Least-squares optimality: the gradient residual is orthogonal to range(D).
  const Eigen::VectorXd res = a * r.values - b;
  EXPECT_LT((a.transpose() * res).norm(), 1e-7 * (a.transpose() * b).norm());
}

TEST(InitPipeline, RecoversLogDepthOfSmoothSurface) {
  const int size = 64;
  const double f = 64;
  const CameraIntrinsics k{f, f, 31.5, 31.5};
  const PixelDomain d = PixelDomain::full(size, size);
  Eigen::VectorXd z(d.size());
  for (int j = 0; j < d.size(); ++j) {
    const Pixel p = d.pixel(j);
    z[j] = 10.0 - 1.5 * std::exp(-((p.u - 30) * (p.u - 30) + (p.v - 34) * (p.v - 34)) / 300.0) + 0.01 * p.u;
  }
  const NormalField n = perspective_normals(z, k, build_gradient_operator(d), centered_coords(d, k));
  const LogGradient g = log_perspective_gradient(n.n, k, d);
  const IntegrationResult r = integrate_gradient(g.g_u, g.g_v, build_gradient_operator(d));
  Eigen::VectorXd logz = z.array().log();
  logz.array() -= logz.mean();
  EXPECT_LT(std::sqrt((r.values - logz).squaredNorm() / d.size()), 1e-3);
}

TEST(InitDepthBalloon, MeanIsKappaAndDomeShaped) {
  const PixelDomain d = disk(48, 20);
  const CameraIntrinsics k{48, 48, 23.5, 23.5};
  for (double kappa : {0.5, 2.84, 8.0}) {
    const InitResult r = init_depth_balloon(d, k, kappa);
    EXPECT_NEAR(r.depth.values.mean(), kappa, 1e-10 * kappa);
    EXPECT_GT(r.depth.values.minCoeff(), 0.0);
    EXPECT_EQ(r.depth.projection, Projection::perspective);
    EXPECT_TRUE(r.balloon_converged);
    EXPECT_TRUE(r.integration_converged);
    // Closest to the camera near the centre, farthest at the rim.
    Eigen::Index closest = 0;
    r.depth.values.minCoeff(&closest);
    EXPECT_LT(std::hypot(d.pixel(static_cast<int>(closest)).u - 23.5, d.pixel(static_cast<int>(closest)).v - 23.5), 3.0);
    const NormalField n = perspective_normals(r.depth, k, d);
    EXPECT_LT(n.n.col(2).maxCoeff(), 0.0);
  }
}

TEST(InitDepthHemisphere, CircularMaskGivesHemisphere) {
  const PixelDomain d = disk(33, 12);
  const CameraIntrinsics k{50, 50, 16, 16};
  const DepthMap z = init_depth_hemisphere(d, k);
  double r_max = 0.0;
  for (const Pixel& p : d.pixels()) r_max = std::max(r_max, std::hypot(p.u - 16.0, p.v - 16.0));
  const double radius = r_max + 0.5;
  const double base = 50 + radius;
  for (int j = 0; j < d.size(); ++j) {
    const double r = std::hypot(d.pixel(j).u - 16.0, d.pixel(j).v - 16.0);
    EXPECT_NEAR(z.values[j], base - std::sqrt(radius * radius - r * r), 1e-12);
  }
  EXPECT_EQ(z.values.minCoeff(), z.values[d.index(16, 16)]);
  EXPECT_GT(z.values.minCoeff(), 0.0);
  EXPECT_THROW(init_depth_hemisphere(d, k, 0.0), Error);
}

}  // namespace
}  // namespace shps

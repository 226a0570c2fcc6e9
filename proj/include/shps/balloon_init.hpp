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

// Depth initialisation. A volume-constrained minimal surface ("balloon") is
// inflated over the mask under orthographic projection; its normals are then
// re-read as perspective normals, turned into a log-depth gradient and
// integrated into a positive perspective depth map.

#pragma once

#include "shps/harmonics_geometry.hpp"
#include "shps/scene_data.hpp"

#include <Eigen/Core>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace shps {

/// Largest singular value of [d_u; d_v], by power iteration on D^T D.
inline double spectral_norm_gradient(const GradientOperator& d, double rel_tol = 1e-6,
                                     int max_iters = 100000) {
  const Eigen::Index n = d.cols();
  if (n == 0) return 0.0;
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::VectorXd x(n);
  for (Eigen::Index k = 0; k < n; ++k) x[k] = unit(rng);
  x.normalize();
  double sigma2 = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd y = d.d_u.transpose() * (d.d_u * x) + d.d_v.transpose() * (d.d_v * x);
    const double next = x.dot(y);
    const double norm = y.norm();
    if (norm == 0.0) return 0.0;
    x = y / norm;
    if (it > 0 && std::abs(next - sigma2) <= rel_tol * next) {
      sigma2 = next;
      break;
    }
    sigma2 = next;
  }
  return std::sqrt(std::max(0.0, sigma2));
}

struct BalloonOptions {
  double tol = 1e-6;      // relative change of the iterate
  int max_iters = 20000;
  double step = 0.0;      // <= 0: 0.8 / ||grad||_spec^2
};

struct BalloonResult {
  DepthMap depth;  // orthographic height above the mask plane, towards the camera
  int iterations = 0;
  bool converged = false;
  double step = 0.0;
};

/// Discrete surface area sum_rows sqrt(1 + |D z|^2) for a zero-outside operator.
inline double surface_area(const GradientOperator& d, const Eigen::VectorXd& z) {
  const Eigen::VectorXd gu = d.d_u * z;
  const Eigen::VectorXd gv = d.d_v * z;
  return (1.0 + gu.array().square() + gv.array().square()).sqrt().sum();
}

/// Projected gradient descent on the surface area subject to sum(z) = V,
/// with z pinned to zero outside the mask. Starts from the flat field V / N.
/// `observer` is called with (iteration, z) after every projection.
inline BalloonResult balloon(const PixelDomain& domain, double volume,
                             const BalloonOptions& opt = {},
                             const std::function<void(int, const Eigen::VectorXd&)>& observer = {}) {
  if (!(volume > 0.0)) throw Error("balloon: volume must be positive");
  const GradientOperator d = build_dirichlet_gradient_operator(domain);
  const double n = domain.size();
  double tau = opt.step;
  if (tau <= 0.0) {
    const double s = spectral_norm_gradient(d);
    tau = 0.8 / (s * s);
  }
  BalloonResult res;
  res.step = tau;
  Eigen::VectorXd z = Eigen::VectorXd::Constant(domain.size(), volume / n);
  Eigen::VectorXd gu, gv, inv;
  for (int it = 1; it <= opt.max_iters; ++it) {
    gu = d.d_u * z;
    gv = d.d_v * z;
    inv = (1.0 + gu.array().square() + gv.array().square()).rsqrt();
    Eigen::VectorXd next = z - tau * (d.d_u.transpose() * inv.cwiseProduct(gu) +
                                      d.d_v.transpose() * inv.cwiseProduct(gv));
    next.array() += (volume - next.sum()) / n;
    const double change = (next - z).norm() / std::max(next.norm(), 1e-300);
    z.swap(next);
    res.iterations = it;
    if (observer) observer(it, z);
    if (change < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.depth = DepthMap{Projection::orthographic, std::move(z)};
  return res;
}

/// n = (grad z_o, -1) / sqrt(|grad z_o|^2 + 1).
inline NormalField orthographic_normals(const Eigen::VectorXd& z_o, const GradientOperator& d) {
  NormalMatrix nt(z_o.size(), 3);
  nt.col(0) = d.d_u * z_o;
  nt.col(1) = d.d_v * z_o;
  nt.col(2).setConstant(-1.0);
  return normalize(std::move(nt));
}

inline constexpr double kGrazingFloor = 1e-6;

struct LogGradient {
  Eigen::VectorXd g_u;
  Eigen::VectorXd g_v;
  std::vector<bool> degenerate;  // grazing view, gradient zeroed
};

/// Gradient of log z_p implied by normals that do not depend on the
/// projection model.
template <class Derived>
LogGradient log_perspective_gradient(const Eigen::MatrixBase<Derived>& normals,
                                     const CameraIntrinsics& k, const PixelDomain& domain) {
  const int n = domain.size();
  LogGradient g{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                std::vector<bool>(static_cast<std::size_t>(n), false)};
  for (int j = 0; j < n; ++j) {
    const Pixel p = domain.pixel(j);
    const double a = normals(j, 0) / k.f_u;
    const double b = normals(j, 1) / k.f_v;
    const double denom = (p.u - k.u_0) * a + (p.v - k.v_0) * b + normals(j, 2);
    if (std::abs(denom) < kGrazingFloor) {
      g.degenerate[static_cast<std::size_t>(j)] = true;
      continue;
    }
    g.g_u[j] = -a / denom;
    g.g_v[j] = -b / denom;
  }
  return g;
}

struct IntegrationOptions {
  double cg_tol = 1e-10;
  int cg_max_iters = 5000;
};

struct IntegrationResult {
  Eigen::VectorXd values;  // zero mean
  bool converged = false;
  int iterations = 0;
};

/// Least-squares integration of a gradient field on the mask: solves
/// D^T D f = D^T g by conjugate gradient, then removes the mean.
inline IntegrationResult integrate_gradient(const Eigen::VectorXd& g_u, const Eigen::VectorXd& g_v,
                                            const GradientOperator& d,
                                            const IntegrationOptions& opt = {}) {
  const SparseMatrix a = SparseMatrix(d.d_u.transpose() * d.d_u) +
                         SparseMatrix(d.d_v.transpose() * d.d_v);
  const Eigen::VectorXd rhs = d.d_u.transpose() * g_u + d.d_v.transpose() * g_v;
  IntegrationResult res;
  if (rhs.squaredNorm() == 0.0) {
    res.values = Eigen::VectorXd::Zero(rhs.size());
    res.converged = true;
    return res;
  }
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(opt.cg_tol);
  cg.setMaxIterations(opt.cg_max_iters);
  cg.compute(a);
  res.values = cg.solve(rhs);
  res.iterations = static_cast<int>(cg.iterations());
  res.converged = cg.info() == Eigen::Success;
  res.values.array() -= res.values.mean();
  return res;
}

struct InitResult {
  DepthMap depth;  // perspective
  DepthMap orthographic;
  bool balloon_converged = false;
  bool integration_converged = false;
  int degenerate_pixels = 0;
};

/// Balloon of volume kappa * N, re-read as a perspective depth whose mean is
/// kappa.
inline InitResult init_depth_balloon(const PixelDomain& domain, const CameraIntrinsics& k,
                                     double kappa, const BalloonOptions& bopt = {},
                                     const IntegrationOptions& iopt = {}) {
  if (!(kappa > 0.0)) throw Error("init: kappa must be positive");
  k.validate();
  InitResult out;
  const BalloonResult b = balloon(domain, kappa * domain.size(), bopt);
  out.orthographic = b.depth;
  out.balloon_converged = b.converged;
  const GradientOperator d = build_gradient_operator(domain);
  // The balloon bulges towards the camera, so its depth is the negated height.
  const NormalField n = orthographic_normals(-b.depth.values, d);
  const LogGradient g = log_perspective_gradient(n.n, k, domain);
  for (bool x : g.degenerate) out.degenerate_pixels += x ? 1 : 0;
  const IntegrationResult log_z = integrate_gradient(g.g_u, g.g_v, d, iopt);
  out.integration_converged = log_z.converged;
  Eigen::VectorXd z = log_z.values.array().exp();
  z *= kappa / z.mean();
  out.depth = DepthMap{Projection::perspective, std::move(z)};
  return out;
}

/// Near hemisphere of the sphere circumscribing the mask's bounding circle
/// (scaled by radius_scale). The tip sits at depth mean(f) and the rim at
/// mean(f) + R, so one pixel spans roughly one depth unit.
inline DepthMap init_depth_hemisphere(const PixelDomain& domain, const CameraIntrinsics& k,
                                      double radius_scale = 1.0) {
  if (!(radius_scale > 0.0)) throw Error("init: radius scale must be positive");
  double cu = 0.0;
  double cv = 0.0;
  for (const Pixel& p : domain.pixels()) {
    cu += p.u;
    cv += p.v;
  }
  cu /= domain.size();
  cv /= domain.size();
  double r_max = 0.0;
  for (const Pixel& p : domain.pixels()) r_max = std::max(r_max, std::hypot(p.u - cu, p.v - cv));
  const double radius = radius_scale * (r_max + 0.5);
  const double base = 0.5 * (k.f_u + k.f_v) + radius;
  DepthMap z{Projection::perspective, Eigen::VectorXd(domain.size())};
  for (int j = 0; j < domain.size(); ++j) {
    const Pixel p = domain.pixel(j);
    const double r2 = (p.u - cu) * (p.u - cu) + (p.v - cv) * (p.v - cv);
    z.values[j] = base - std::sqrt(std::max(0.0, radius * radius - r2));
  }
  return z;
}

}  // namespace shps

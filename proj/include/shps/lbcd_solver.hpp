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

// Lagged block coordinate descent for joint depth, albedo and harmonic
// lighting estimation.
//
// The objective is
//   E = sum_{i,c,j} phi(r_{i,c,j}) + mu sum_{c,j} |(grad rho_c)_j|_gamma,
//   r_{i,c,j} = rho_{c,j} l_c^i . h(n~_j[z] / theta_j) - I^i_{c,j},
// with phi the Cauchy loss and |.|_gamma the Huber loss. Each outer iteration
// refreshes theta = |n~[z]| and then updates albedo, lighting and depth in
// turn, each as a weighted least-squares problem whose weights come from the
// current residuals. Depth is linearised (Gauss-Newton) and safeguarded by a
// backtracking line search.

#pragma once

#include "shps/harmonics_geometry.hpp"
#include "shps/scene_data.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace shps {

struct SolverConfig {
  double cauchy_scale = 0.15;    // lambda
  double huber_threshold = 0.1;  // gamma
  double tv_weight = 2e-6;       // mu
  int warmup_iters = 8;          // first-order-only iterations
  int max_outer_iters = 100;
  double outer_tol = 1e-6;       // relative energy change
  double cg_tol = 1e-6;
  int cg_max_iters = 500;
  double ls_shrink = 0.5;
  int ls_max_backtracks = 20;
  bool lagged_line_search = false;

  void validate() const {
    if (!(cauchy_scale > 0) || !(huber_threshold > 0) || !(tv_weight > 0)) {
      throw Error("solver config: lambda, gamma and mu must be positive");
    }
    if (warmup_iters < 0 || max_outer_iters < 0 || cg_max_iters <= 0) {
      throw Error("solver config: iteration counts must be nonnegative");
    }
    if (!(ls_shrink > 0 && ls_shrink < 1) || ls_max_backtracks < 0) {
      throw Error("solver config: invalid line-search parameters");
    }
  }
};

/// phi(s) = lambda^2 log(1 + s^2 / lambda^2).
inline double cauchy_loss(double r, double lambda) {
  return lambda * lambda * std::log1p(r * r / (lambda * lambda));
}

/// phi'(r) / r, with the r -> 0 limit.
inline double cauchy_weight(double r, double lambda) {
  return 2.0 / (1.0 + r * r / (lambda * lambda));
}

inline double huber_loss(double s, double gamma) {
  const double a = std::abs(s);
  return a <= gamma ? a * a / (2.0 * gamma) : a - gamma / 2.0;
}

inline double huber_weight(double grad_mag, double gamma) {
  return 1.0 / std::max(gamma, grad_mag);
}

struct EnergyRecord {
  int iteration = 0;
  double energy = 0.0;
};

struct SolverState {
  AlbedoMaps albedo;
  LightingSet lighting;
  DepthMap depth;
  Eigen::VectorXd theta;
  std::vector<EnergyRecord> energy_history;
};

/// Observations plus the fixed geometric operators of one reconstruction.
class Problem {
 public:
  Problem(const ImageStack& images, const PixelDomain& domain, const CameraIntrinsics& k)
      : images_(images), domain_(domain), intrinsics_(k),
        gradient_(build_gradient_operator(domain)), coords_(centered_coords(domain, k)) {
    k.validate();
    if (images.pixels() != domain.size()) throw Error("problem: image and mask sizes differ");
    if (images.images() < 1) throw Error("problem: no images");
  }

  const ImageStack& images() const { return images_; }
  const PixelDomain& domain() const { return domain_; }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  const GradientOperator& gradient() const { return gradient_; }
  const CenteredCoords& coords() const { return coords_; }
  int pixels() const { return domain_.size(); }
  int images_count() const { return images_.images(); }
  int channels() const { return images_.channels(); }

  ResidualModel model() const { return {domain_, intrinsics_, gradient_, coords_}; }

  NormalMatrix unnormalized(const Eigen::VectorXd& z) const {
    return unnormalized_normal(z, intrinsics_, gradient_, coords_);
  }

 private:
  const ImageStack& images_;
  const PixelDomain& domain_;
  CameraIntrinsics intrinsics_;
  GradientOperator gradient_;
  CenteredCoords coords_;
};

/// theta_j = |n~_j[z]|, floored.
inline Eigen::VectorXd update_theta(const Problem& p, const Eigen::VectorXd& z) {
  const NormalMatrix nt = p.unnormalized(z);
  Eigen::VectorXd theta(nt.rows());
  for (Eigen::Index j = 0; j < nt.rows(); ++j) theta[j] = std::max(nt.row(j).norm(), kThetaFloor);
  return theta;
}

inline void update_theta(const Problem& p, SolverState& s) {
  s.theta = update_theta(p, s.depth.values);
}

/// Harmonic images of n~[z] / theta (unit only when theta = |n~[z]|).
inline HarmonicImages lagged_harmonics(const Problem& p, const Eigen::VectorXd& z,
                                       const Eigen::VectorXd& theta) {
  NormalMatrix nt = p.unnormalized(z);
  for (Eigen::Index j = 0; j < nt.rows(); ++j) nt.row(j) /= theta[j];
  return harmonic_images(nt);
}

/// Stacked residuals, row (i * C + c) * N + j.
inline Eigen::VectorXd residuals(const Problem& p, const AlbedoMaps& albedo,
                                 const LightingSet& lighting, const HarmonicImages& h) {
  const int n = p.pixels();
  Eigen::VectorXd r(static_cast<Eigen::Index>(p.images_count()) * p.channels() * n);
  for (int i = 0; i < p.images_count(); ++i) {
    for (int c = 0; c < p.channels(); ++c) {
      const Eigen::Index off = (static_cast<Eigen::Index>(i) * p.channels() + c) * n;
      r.segment(off, n) = albedo.col(c).cwiseProduct(h * lighting.at(i, c)) -
                          p.images().channel(i, c);
    }
  }
  return r;
}

inline double regularizer(const Problem& p, const AlbedoMaps& albedo, const SolverConfig& cfg) {
  double e = 0.0;
  for (Eigen::Index c = 0; c < albedo.cols(); ++c) {
    const Eigen::VectorXd gu = p.gradient().d_u * albedo.col(c);
    const Eigen::VectorXd gv = p.gradient().d_v * albedo.col(c);
    for (Eigen::Index j = 0; j < gu.size(); ++j) {
      e += huber_loss(std::hypot(gu[j], gv[j]), cfg.huber_threshold);
    }
  }
  return cfg.tv_weight * e;
}

inline double data_term(const Eigen::VectorXd& r, const SolverConfig& cfg) {
  double e = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k) e += cauchy_loss(r[k], cfg.cauchy_scale);
  return e;
}

/// Objective with theta taken from the state.
inline double energy(const Problem& p, const SolverState& s, const SolverConfig& cfg) {
  const HarmonicImages h = lagged_harmonics(p, s.depth.values, s.theta);
  return data_term(residuals(p, s.albedo, s.lighting, h), cfg) + regularizer(p, s.albedo, cfg);
}

/// Objective with the constraint theta = |n~[z]| enforced.
inline double exact_energy(const Problem& p, const SolverState& s, const SolverConfig& cfg) {
  SolverState t = s;
  update_theta(p, t);
  return energy(p, t, cfg);
}

inline SolverState initialize_state(const Problem& p, const DepthMap& init_depth) {
  if (init_depth.values.size() != p.pixels()) throw Error("init depth size mismatch");
  init_depth.validate();
  if (init_depth.projection != Projection::perspective) {
    throw Error("init depth must be a perspective depth map");
  }
  SolverState s;
  const int m = p.images_count();
  s.albedo.resize(p.pixels(), p.channels());
  std::vector<double> v(static_cast<std::size_t>(m));
  for (int c = 0; c < p.channels(); ++c) {
    for (int j = 0; j < p.pixels(); ++j) {
      for (int i = 0; i < m; ++i) v[static_cast<std::size_t>(i)] = p.images().at(i, c, j);
      std::sort(v.begin(), v.end());
      const std::size_t mid = v.size() / 2;
      s.albedo(j, c) = v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
    }
  }
  s.lighting = LightingSet(m, p.channels());
  Vec9 l0 = Vec9::Zero();
  l0[0] = 0.2;
  l0[3] = -1.0;
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < p.channels(); ++c) s.lighting.at(i, c) = l0;
  }
  s.depth = init_depth;
  update_theta(p, s);
  return s;
}

struct BlockReport {
  int cg_iterations = 0;
  bool accepted = true;  // false: update rejected, previous block kept
  bool flagged = false;  // CG breakdown or singular system
  double energy = 0.0;   // objective after the block
};

/// Cauchy weights of stacked residuals.
inline Eigen::VectorXd cauchy_weights(const Eigen::VectorXd& r, double lambda) {
  return r.unaryExpr([lambda](double x) { return cauchy_weight(x, lambda); });
}

/// Albedo block: per channel, the SPD system
///   (sum_i w s^2 + mu grad^T Q grad) rho = sum_i w s I
/// solved by CG from the current albedo.
inline BlockReport update_albedo(const Problem& p, SolverState& s, const SolverConfig& cfg) {
  const int n = p.pixels();
  const HarmonicImages h = lagged_harmonics(p, s.depth.values, s.theta);
  const Eigen::VectorXd r = residuals(p, s.albedo, s.lighting, h);
  const Eigen::VectorXd w = cauchy_weights(r, cfg.cauchy_scale);
  const double before = data_term(r, cfg) + regularizer(p, s.albedo, cfg);

  BlockReport rep;
  AlbedoMaps next = s.albedo;
  const GradientOperator& g = p.gradient();
  for (int c = 0; c < p.channels(); ++c) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < p.images_count(); ++i) {
      const Eigen::Index off = (static_cast<Eigen::Index>(i) * p.channels() + c) * n;
      const Eigen::VectorXd sh = h * s.lighting.at(i, c);
      const auto wi = w.segment(off, n);
      diag += wi.cwiseProduct(sh.cwiseAbs2());
      rhs += wi.cwiseProduct(sh).cwiseProduct(p.images().channel(i, c));
    }
    const Eigen::VectorXd gu = g.d_u * s.albedo.col(c);
    const Eigen::VectorXd gv = g.d_v * s.albedo.col(c);
    Eigen::VectorXd q(n);
    for (int j = 0; j < n; ++j) q[j] = huber_weight(std::hypot(gu[j], gv[j]), cfg.huber_threshold);
    SparseMatrix a = cfg.tv_weight * (SparseMatrix(g.d_u.transpose() * q.asDiagonal() * g.d_u) +
                                      SparseMatrix(g.d_v.transpose() * q.asDiagonal() * g.d_v));
    for (int j = 0; j < n; ++j) a.coeffRef(j, j) += diag[j];
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(cfg.cg_tol);
    cg.setMaxIterations(cfg.cg_max_iters);
    cg.compute(a);
    Eigen::VectorXd x = cg.solveWithGuess(rhs, s.albedo.col(c));
    rep.cg_iterations += static_cast<int>(cg.iterations());
    if (!x.allFinite()) {
      rep.flagged = true;
      continue;
    }
    next.col(c) = x;
  }

  const double after = data_term(residuals(p, next, s.lighting, h), cfg) + regularizer(p, next, cfg);
  if (after <= before) {
    s.albedo = std::move(next);
    rep.energy = after;
  } else {
    rep.accepted = false;
    rep.energy = before;
  }
  return rep;
}

inline constexpr double kLightingRidge = 1e-12;

/// Lighting block: one weighted normal-equation system per (image, channel),
/// 4x4 while the second-order terms are frozen and 9x9 afterwards.
inline BlockReport update_lighting(const Problem& p, SolverState& s, const SolverConfig& cfg,
                                   bool freeze_second_order) {
  const int n = p.pixels();
  const int terms = freeze_second_order ? 4 : 9;
  const HarmonicImages h = lagged_harmonics(p, s.depth.values, s.theta);
  const Eigen::VectorXd r = residuals(p, s.albedo, s.lighting, h);
  const Eigen::VectorXd w = cauchy_weights(r, cfg.cauchy_scale);
  const double reg = regularizer(p, s.albedo, cfg);
  const double before = data_term(r, cfg) + reg;

  BlockReport rep;
  LightingSet next = s.lighting;
  Eigen::MatrixXd design(n, terms);
  for (int c = 0; c < p.channels(); ++c) {
    for (int i = 0; i < p.images_count(); ++i) {
      const Eigen::Index off = (static_cast<Eigen::Index>(i) * p.channels() + c) * n;
      const Eigen::VectorXd sw = w.segment(off, n).cwiseSqrt();
      design = (sw.cwiseProduct(s.albedo.col(c))).asDiagonal() * h.leftCols(terms);
      Eigen::MatrixXd ata = design.transpose() * design;
      const Eigen::VectorXd atb = design.transpose() * sw.cwiseProduct(p.images().channel(i, c));
      Eigen::LLT<Eigen::MatrixXd> llt(ata);
      if (llt.info() != Eigen::Success) {
        rep.flagged = true;
        ata.diagonal().array() += kLightingRidge;
        llt.compute(ata);
      }
      Vec9 l = Vec9::Zero();
      l.head(terms) = llt.solve(atb);
      if (!l.allFinite()) {
        rep.flagged = true;
        continue;
      }
      next.at(i, c) = l;
    }
  }

  const double after = data_term(residuals(p, s.albedo, next, h), cfg) + reg;
  if (after <= before) {
    s.lighting = std::move(next);
    rep.energy = after;
  } else {
    rep.accepted = false;
    rep.energy = before;
  }
  return rep;
}

struct GaussNewtonSystem {
  SparseMatrix normal;  // J^T W J
  Eigen::VectorXd rhs;  // -J^T W r
};

/// Assembles the weighted Gauss-Newton system of the depth block without
/// forming J: per pixel the 3x3 block sum_{i,c} w v v^T (v = d r / d n~_j)
/// is pulled back through the stencil of n~_j.
inline GaussNewtonSystem depth_normal_equations(const Problem& p, const SolverState& s,
                                                const Eigen::VectorXd& w,
                                                const Eigen::VectorXd& r) {
  const int n = p.pixels();
  const NormalMatrix nt = p.unnormalized(s.depth.values);
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(n) * 9);
  GaussNewtonSystem sys{SparseMatrix(n, n), Eigen::VectorXd::Zero(n)};
  for (int j = 0; j < n; ++j) {
    if (s.theta[j] <= kThetaFloor) continue;
    const Vec3 nj = nt.row(j).transpose() / s.theta[j];
    const Eigen::Matrix<double, 9, 3> dh = harmonic_basis_jacobian(nj) / s.theta[j];
    Eigen::Matrix3d block = Eigen::Matrix3d::Zero();
    Vec3 grad = Vec3::Zero();
    for (int i = 0; i < p.images_count(); ++i) {
      for (int c = 0; c < p.channels(); ++c) {
        const Eigen::Index k = (static_cast<Eigen::Index>(i) * p.channels() + c) * n + j;
        const Vec3 v = s.albedo(j, c) * (dh.transpose() * s.lighting.at(i, c));
        block.noalias() += w[k] * v * v.transpose();
        grad.noalias() += w[k] * r[k] * v;
      }
    }
    const NormalStencil st = normal_stencil(j, p.intrinsics(), p.gradient(), p.coords());
    for (int a = 0; a < st.count; ++a) {
      const Vec3& da = st.d[static_cast<std::size_t>(a)];
      sys.rhs[st.col[static_cast<std::size_t>(a)]] -= da.dot(grad);
      const Vec3 bda = block * da;
      for (int b = 0; b < st.count; ++b) {
        t.emplace_back(st.col[static_cast<std::size_t>(a)], st.col[static_cast<std::size_t>(b)],
                       st.d[static_cast<std::size_t>(b)].dot(bda));
      }
    }
  }
  sys.normal.setFromTriplets(t.begin(), t.end());
  return sys;
}

struct GaussNewtonDirection {
  Eigen::VectorXd delta;
  int cg_iterations = 0;
  bool usable = false;  // false for a zero right-hand side or a non-finite solve
};

/// Solves J^T W J delta = -J^T W r by conjugate gradient.
inline GaussNewtonDirection gauss_newton_direction(const Problem& p, const SolverState& s,
                                                   const Eigen::VectorXd& w,
                                                   const Eigen::VectorXd& r,
                                                   const SolverConfig& cfg) {
  GaussNewtonDirection d;
  const GaussNewtonSystem sys = depth_normal_equations(p, s, w, r);
  if (sys.rhs.squaredNorm() == 0.0) {
    d.delta = Eigen::VectorXd::Zero(p.pixels());
    return d;
  }
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(cfg.cg_tol);
  cg.setMaxIterations(cfg.cg_max_iters);
  cg.compute(sys.normal);
  d.delta = cg.solve(sys.rhs);
  d.cg_iterations = static_cast<int>(cg.iterations());
  d.usable = d.delta.allFinite();
  return d;
}

struct DepthReport {
  int cg_iterations = 0;
  int backtracks = 0;
  double step = 0.0;  // accepted t, 0 when z is unchanged
  bool accepted = false;
  double energy = 0.0;
};

/// Depth block: Gauss-Newton direction from J^T W J delta = -J^T W r (CG),
/// then backtracking on t in z + t delta until the objective decreases.
/// The line-search objective enforces theta = |n~[z]| at each trial depth.
inline DepthReport update_depth(const Problem& p, SolverState& s, const SolverConfig& cfg) {
  const HarmonicImages h = lagged_harmonics(p, s.depth.values, s.theta);
  const Eigen::VectorXd r = residuals(p, s.albedo, s.lighting, h);
  const Eigen::VectorXd w = cauchy_weights(r, cfg.cauchy_scale);
  const double reg = regularizer(p, s.albedo, cfg);
  const double before = data_term(r, cfg) + reg;

  DepthReport rep;
  rep.energy = before;
  const GaussNewtonDirection dir = gauss_newton_direction(p, s, w, r, cfg);
  rep.cg_iterations = dir.cg_iterations;
  if (!dir.usable) return rep;
  const Eigen::VectorXd& delta = dir.delta;

  double t = 1.0;
  for (int bt = 0; bt <= cfg.ls_max_backtracks; ++bt, t *= cfg.ls_shrink) {
    rep.backtracks = bt;
    const Eigen::VectorXd z = s.depth.values + t * delta;
    if (z.minCoeff() <= 0.0) continue;
    const Eigen::VectorXd theta = cfg.lagged_line_search ? s.theta : update_theta(p, z);
    const double e = data_term(residuals(p, s.albedo, s.lighting, lagged_harmonics(p, z, theta)), cfg) + reg;
    if (std::isfinite(e) && e < before) {
      s.depth.values = z;
      rep.accepted = true;
      rep.step = t;
      rep.energy = cfg.lagged_line_search ? exact_energy(p, s, cfg) : e;
      return rep;
    }
  }
  return rep;
}

struct IterationReport {
  int iteration = 0;  // 1-based outer iteration
  bool warmup = false;
  double energy = 0.0;
  BlockReport albedo;
  BlockReport lighting;
  DepthReport depth;
};

using IterationCallback = std::function<void(const IterationReport&, const SolverState&)>;

inline SolverState solve(const Problem& p, const DepthMap& init_depth, const SolverConfig& cfg,
                         const IterationCallback& callback = {}) {
  cfg.validate();
  SolverState s = initialize_state(p, init_depth);
  double current = energy(p, s, cfg);
  s.energy_history.push_back({0, current});
  for (int k = 1; k <= cfg.max_outer_iters; ++k) {
    IterationReport rep;
    rep.iteration = k;
    rep.warmup = k <= cfg.warmup_iters;
    update_theta(p, s);
    rep.albedo = update_albedo(p, s, cfg);
    rep.lighting = update_lighting(p, s, cfg, rep.warmup);
    rep.depth = update_depth(p, s, cfg);
    const double next = rep.depth.energy;
    rep.energy = next;
    s.energy_history.push_back({k, next});
    if (callback) callback(rep, s);
    const double change = std::abs(current - next) / std::max(std::abs(current), 1e-300);
    current = next;
    if (next == 0.0) break;
    if (!rep.warmup && change < cfg.outer_tol) break;
  }
  update_theta(p, s);
  return s;
}

}  // namespace shps

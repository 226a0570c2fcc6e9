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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "shps/balloon_init.hpp"
#include "shps/evaluation.hpp"
#include "shps/forward_render.hpp"
#include "shps/harmonics_geometry.hpp"
#include "shps/lbcd_solver.hpp"
#include "shps/synthetic.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace shps;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double time_limit, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = seconds_since(t0);
  const bool pass = o.pass && s < time_limit;
  if (!pass) ++failures;
  std::printf("%s  %-24s %s [%.1f s, limit %.0f s]\n", pass ? "PASS" : "FAIL", name.c_str(),
              o.detail.c_str(), s, time_limit);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double relative_rms(const ImageStack& a, const ImageStack& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) {
    num += (a.values()[k] - b.values()[k]) * (a.values()[k] - b.values()[k]);
    den += b.values()[k] * b.values()[k];
  }
  return std::sqrt(num / den);
}

Outcome sh_energy_capture() {
  const int count = 4000;
  const NormalMatrix n = sphere_normals(count);
  const AlbedoMaps rho = AlbedoMaps::Ones(count, 3);
  std::mt19937_64 rng(2024);
  double worst2 = 0.0;
  double worst1 = 0.0;
  for (int e = 0; e < 6; ++e) {
    const ImageStack img = render_environment(n, rho, random_environment_map(rng), 256);
    worst2 = std::max(worst2, relative_rms(render_sh(rho, fit_sh_lighting(img, n, rho, 2).lighting, n), img));
    worst1 = std::max(worst1, relative_rms(render_sh(rho, fit_sh_lighting(img, n, rho, 1).lighting, n), img));
  }
  return {worst2 <= 0.05 && worst1 <= 0.35,
          fmt("6 env maps, worst relative RMS: order 2 %.4f (<= 0.05), order 1 %.4f (<= 0.35)", worst2, worst1)};
}

Outcome jacobian_correctness() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const CameraIntrinsics k{15 + 10 * uni(rng), 15 + 10 * uni(rng), 6.5 + 2 * uni(rng), 6.5 + 2 * uni(rng)};
    BumpParams bp;
    bp.base_depth = 5 + 5 * uni(rng);
    bp.amplitude = 0.5 + uni(rng);
    bp.sigma = 3 + 2 * uni(rng);
    bp.mask_radius = 6.5 + uni(rng);
    const SyntheticShape shape = gaussian_bump(16, 16, k, bp);
    const int n = shape.domain.size();
    AlbedoMaps albedo(n, 3);
    for (Eigen::Index j = 0; j < albedo.size(); ++j) albedo.data()[j] = 0.2 + 0.8 * uni(rng);
    const LightingSet lighting = random_sh_lighting(3, 3, rng);
    const GradientOperator g = build_gradient_operator(shape.domain);
    const CenteredCoords xy = centered_coords(shape.domain, k);
    Eigen::VectorXd z = shape.depth.values;
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] += 0.1 * (uni(rng) - 0.5);
    const Eigen::VectorXd theta = normalize(unnormalized_normal(z, k, g, xy)).theta * (1 + 0.1 * uni(rng));
    auto model = [&](const Eigen::VectorXd& zz) {
      NormalMatrix nt = unnormalized_normal(zz, k, g, xy);
      for (Eigen::Index j = 0; j < nt.rows(); ++j) nt.row(j) /= theta[j];
      const HarmonicImages h = harmonic_images(nt);
      Eigen::VectorXd out(3 * 3 * n);
      for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 3; ++c) out.segment((i * 3 + c) * n, n) = albedo.col(c).cwiseProduct(h * lighting.at(i, c));
      }
      return out;
    };
    const Eigen::MatrixXd jac(residual_jacobian_z(ResidualModel{shape.domain, k, g, xy}, albedo, lighting, z, theta));
    const double h = 1e-6;
    for (int col = 0; col < n; ++col) {
      Eigen::VectorXd zp = z;
      Eigen::VectorXd zm = z;
      zp[col] += h;
      zm[col] -= h;
      const Eigen::VectorXd fd = (model(zp) - model(zm)) / (2 * h);
      const double scale = std::max(jac.col(col).cwiseAbs().maxCoeff(), 1e-8);
      worst = std::max(worst, (fd - jac.col(col)).cwiseAbs().maxCoeff() / scale);
    }
  }
  return {worst < 1e-4, fmt("5 random 16x16 scenes, max relative error %.2e (< 1e-4)", worst)};
}

Outcome balloon_oracle() {
  const int size = 64;
  const double c = (size - 1) / 2.0;
  const double radius = 28;
  const double h = 5;
  const PixelDomain d =
      PixelDomain::from_predicate(size, size, [&](int u, int v) { return std::hypot(u - c, v - c) < radius; });
  // Zero height at the first exterior pixel centres, half a pixel past the mask.
  const double re = radius + 0.5;
  const double rs = (re * re + h * h) / (2 * h);
  Eigen::VectorXd cap(d.size());
  for (int j = 0; j < d.size(); ++j) {
    const double r = std::hypot(d.pixel(j).u - c, d.pixel(j).v - c);
    cap[j] = std::sqrt(rs * rs - r * r) - (rs - h);
  }
  const double volume = cap.sum();
  double worst_volume = 0.0;
  const BalloonResult b = balloon(d, volume, {}, [&](int, const Eigen::VectorXd& z) {
    worst_volume = std::max(worst_volume, std::abs(z.sum() - volume) / volume);
  });
  const double rms = std::sqrt((b.depth.values - cap).squaredNorm() / d.size());
  return {rms < 0.01 * h && worst_volume <= 1e-10,
          fmt("RMS %.4f = %.2f%% of cap height (< 1%%), worst volume error %.1e (<= 1e-10), %g iterations", rms,
              100 * rms / h, worst_volume, b.iterations)};
}

Outcome integration_round_trip() {
  const int size = 64;
  const CameraIntrinsics k{64, 64, 31.5, 31.5};
  const PixelDomain d = PixelDomain::full(size, size);
  Eigen::VectorXd z(d.size());
  for (int j = 0; j < d.size(); ++j) {
    const double u = d.pixel(j).u;
    const double v = d.pixel(j).v;
    z[j] = 10.0 - 1.5 * std::exp(-((u - 30) * (u - 30) + (v - 34) * (v - 34)) / 300.0) + 0.01 * u +
           0.2 * std::sin(0.08 * v);
  }
  const GradientOperator g = build_gradient_operator(d);
  const NormalField n = perspective_normals(z, k, g, centered_coords(d, k));
  const LogGradient lg = log_perspective_gradient(n.n, k, d);
  const IntegrationResult r = integrate_gradient(lg.g_u, lg.g_v, g);
  Eigen::VectorXd logz = z.array().log();
  logz.array() -= logz.mean();
  const double rms = std::sqrt((r.values - logz).squaredNorm() / d.size());
  return {rms < 1e-3 && r.converged, fmt("64x64 log-depth RMS %.2e (< 1e-3)", rms)};
}

Outcome weight_formulas() {
  const double lambda = 0.15;
  const double gamma = 0.1;
  const bool ok = cauchy_weight(0.0, lambda) == 2.0 && cauchy_weight(lambda, lambda) == 1.0 &&
                  huber_weight(0.0, gamma) == 1.0 / gamma;
  return {ok, fmt("cauchy_weight(0) = %.17g, cauchy_weight(lambda) = %.17g, huber_weight(0) = %.17g",
                  cauchy_weight(0.0, lambda), cauchy_weight(lambda, lambda), huber_weight(0.0, gamma))};
}

struct Scene {
  std::string name;
  CameraIntrinsics k;
  SyntheticShape shape;
  AlbedoMaps albedo;
  SyntheticDataset data;
  double kappa = 0.0;
};

Scene make_scene(const std::string& shape_name, const std::string& albedo, double kappa) {
  const int size = 128;
  Scene s;
  s.name = shape_name + "/" + albedo;
  s.k = CameraIntrinsics{128, 128, (size - 1) / 2.0, (size - 1) / 2.0};
  s.shape = shape_name == "bump" ? gaussian_bump(size, size, s.k) : sphere_cap(size, size, s.k);
  s.albedo = albedo_pattern(albedo, s.shape.domain, 3);
  std::mt19937_64 rng(42);
  LightingSet lighting = random_sh_lighting(20, 3, rng);
  normalize_exposure(lighting, s.albedo, perspective_normals(s.shape.depth, s.k, s.shape.domain).n);
  s.data = make_synthetic_dataset(s.shape.depth, s.albedo, lighting, s.k, s.shape.domain);
  s.kappa = kappa;
  return s;
}

struct RunResult {
  double init_mae = 0.0;
  double final_mae = 0.0;
  double seconds = 0.0;
  int iterations = 0;
  int energy_increases = 0;
  int warmup_violations = 0;
  int warmup_checked = 0;
};

RunResult reconstruct(const Scene& s, const DepthMap& init) {
  const auto t0 = Clock::now();
  const Problem p(s.data.images, s.shape.domain, s.k);
  const SolverConfig cfg;
  RunResult r;
  const SolverState st = solve(p, init, cfg, [&](const IterationReport& rep, const SolverState& state) {
    if (!rep.warmup) return;
    ++r.warmup_checked;
    for (int i = 0; i < state.lighting.images(); ++i) {
      for (int c = 0; c < state.lighting.channels(); ++c) {
        if (state.lighting.at(i, c).tail<5>() != Vec9::Zero().tail<5>()) ++r.warmup_violations;
      }
    }
  });
  r.seconds = seconds_since(t0);
  for (std::size_t k = 1; k < st.energy_history.size(); ++k) {
    if (st.energy_history[k].energy > st.energy_history[k - 1].energy) ++r.energy_increases;
  }
  r.iterations = st.energy_history.back().iteration;
  r.init_mae = mean_angular_error(perspective_normals(init, s.k, s.shape.domain).n, s.data.normals.n, s.shape.domain);
  r.final_mae = mean_angular_error(perspective_normals(st.depth, s.k, s.shape.domain).n, s.data.normals.n, s.shape.domain);
  return r;
}

}  // namespace

int main() {
  criterion("sh-energy-capture", 30, sh_energy_capture);
  criterion("jacobian-fd", 10, jacobian_correctness);
  criterion("balloon-oracle", 10, balloon_oracle);
  criterion("integration-round-trip", 5, integration_round_trip);
  criterion("weight-formulas", 1, weight_formulas);

  // Balloon volume ratios are in pixel units at 128x128.
  std::vector<Scene> scenes;
  for (const char* albedo : {"white", "bars", "rectcircle"}) scenes.push_back(make_scene("bump", albedo, 8.0));
  for (const char* albedo : {"white", "bars", "rectcircle"}) scenes.push_back(make_scene("hemisphere", albedo, 16.0));

  std::vector<RunResult> runs;
  for (const Scene& s : scenes) {
    criterion("render-and-recover", 300, [&] {
      const InitResult init = init_depth_balloon(s.shape.domain, s.k, s.kappa);
      const auto t0 = Clock::now();
      RunResult r = reconstruct(s, init.depth);
      r.seconds = seconds_since(t0);
      runs.push_back(r);
      return Outcome{r.final_mae < 10.0 && r.final_mae < r.init_mae,
                     s.name + fmt(" kappa %g: MAE %.2f deg (< 10, init %.2f), %g iterations", s.kappa, r.final_mae,
                                  r.init_mae, r.iterations)};
    });
  }

  criterion("hemisphere-init-study", 300, [&] {
    const Scene& bump = scenes[1];
    const RunResult h = reconstruct(bump, init_depth_hemisphere(bump.shape.domain, bump.k));
    runs.push_back(h);
    const double balloon_mae = runs[1].final_mae;
    return Outcome{h.final_mae >= balloon_mae,
                   bump.name + fmt(": hemisphere init final MAE %.2f >= balloon init final MAE %.2f", h.final_mae,
                                   balloon_mae)};
  });

  criterion("monotone-energy", 1, [&] {
    int increases = 0;
    for (const RunResult& r : runs) increases += r.energy_increases;
    return Outcome{increases == 0 && runs.size() == scenes.size() + 1,
                   fmt("%g solver runs, %g energy increases across outer iterations", runs.size(), increases)};
  });

  criterion("warmup-contract", 1, [&] {
    int violations = 0;
    int checked = 0;
    for (const RunResult& r : runs) {
      violations += r.warmup_violations;
      checked += r.warmup_checked;
    }
    const SolverConfig cfg;
    return Outcome{violations == 0 && checked == static_cast<int>(runs.size()) * cfg.warmup_iters,
                   fmt("%g warmup iterations checked, %g lighting vectors with nonzero entries 5-9", checked,
                       violations)};
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}

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

// Normal-field error metrics and run summaries.

#pragma once

#include "shps/harmonics_geometry.hpp"
#include "shps/lbcd_solver.hpp"
#include "shps/scene_data.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>

namespace shps {

/// Unit normal flipped, if needed, so that its third component is <= 0.
inline Vec3 camera_facing(const Vec3& n) {
  const double len = n.norm();
  if (!(len > 0.0)) throw Error("mean_angular_error: zero normal");
  return n.z() > 0.0 ? Vec3(-n / len) : Vec3(n / len);
}

/// Mean of arccos(clamp(a . b)) over the mask, in degrees. Both fields are
/// renormalized and brought to the n3 <= 0 convention first.
template <class A, class B>
double mean_angular_error(const Eigen::MatrixBase<A>& est, const Eigen::MatrixBase<B>& gt,
                          const PixelDomain& domain) {
  const Eigen::Index n = domain.size();
  if (est.rows() != n || gt.rows() != n || est.cols() != 3 || gt.cols() != 3) {
    throw Error("mean_angular_error: normal fields do not match the domain");
  }
  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vec3 a = camera_facing(est.row(j).transpose());
    const Vec3 b = camera_facing(gt.row(j).transpose());
    sum += std::acos(std::clamp(a.dot(b), -1.0, 1.0));
  }
  return sum / static_cast<double>(n) * 180.0 / std::numbers::pi;
}

inline double mean_angular_error(const NormalField& est, const PixelDomain& est_domain,
                                 const NormalField& gt, const PixelDomain& gt_domain) {
  if (!(est_domain == gt_domain)) throw Error("mean_angular_error: domain mismatch");
  return mean_angular_error(est.n, gt.n, est_domain);
}

inline nlohmann::json config_json(const SolverConfig& cfg) {
  return {{"lambda", cfg.cauchy_scale},
          {"gamma", cfg.huber_threshold},
          {"mu", cfg.tv_weight},
          {"warmup_iters", cfg.warmup_iters},
          {"max_iters", cfg.max_outer_iters},
          {"outer_tol", cfg.outer_tol},
          {"cg_tol", cfg.cg_tol},
          {"cg_max_iters", cfg.cg_max_iters},
          {"lagged_line_search", cfg.lagged_line_search}};
}

struct RunInfo {
  double seconds = 0.0;
  std::optional<double> mae_degrees;
  nlohmann::json extra = nlohmann::json::object();
};

/// Summary of a finished solve. The MAE field is present only when known.
inline nlohmann::json report(const SolverState& s, const SolverConfig& cfg, const RunInfo& info) {
  nlohmann::json j;
  j["iterations"] = s.energy_history.empty() ? 0 : s.energy_history.back().iteration;
  j["final_energy"] = s.energy_history.empty() ? 0.0 : s.energy_history.back().energy;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : s.energy_history) curve.push_back(e.energy);
  j["energy_history"] = std::move(curve);
  j["seconds"] = info.seconds;
  if (info.mae_degrees) j["mae_degrees"] = *info.mae_degrees;
  j["config"] = config_json(cfg);
  for (const auto& [k, v] : info.extra.items()) j[k] = v;
  return j;
}

inline void write_energy_csv(std::ostream& out, const SolverState& s) {
  out << "iteration,energy\n";
  out.precision(17);
  for (const auto& e : s.energy_history) out << e.iteration << ',' << e.energy << '\n';
}

}  // namespace shps

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

// HTTP endpoints for interactive kappa selection.
//
//   GET  /api/balloon?kappa=K  -> {kappa, width, height, mean_depth, depth, shaded_preview}
//   POST /api/accept {"kappa": K} -> persists K to the configured file
//
// Balloon requests are computed one at a time. A request that was overtaken
// by a newer one while it waited is answered with the newest result.

#pragma once

#include "shps/balloon_init.hpp"
#include "shps/io.hpp"
#include "shps/scene_data.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

namespace shps {

struct TunerOptions {
  std::filesystem::path config_path = "tuner_config.json";
  std::filesystem::path ui_dir;  // empty: built-in placeholder page
  BalloonOptions balloon;
};

/// Frontal Lambertian shading max(0, -n3) of the balloon's orthographic
/// normals; zero outside the mask.
inline Image balloon_preview(const InitResult& init, const PixelDomain& domain) {
  const GradientOperator d = build_gradient_operator(domain);
  const NormalField n = orthographic_normals(-init.orthographic.values, d);
  Eigen::VectorXd shade = (-n.n.col(2)).cwiseMax(0.0);
  return scatter(shade, domain);
}

inline nlohmann::json balloon_payload(double kappa, const InitResult& init,
                                      const PixelDomain& domain) {
  nlohmann::json depth = nlohmann::json::array();
  for (int v = 0; v < domain.height(); ++v) {
    for (int u = 0; u < domain.width(); ++u) {
      const int j = domain.index(u, v);
      depth.push_back(j >= 0 ? nlohmann::json(init.depth.values[j]) : nlohmann::json(nullptr));
    }
  }
  const std::vector<unsigned char> png = encode_png(balloon_preview(init, domain), 8);
  return {{"kappa", kappa},
          {"width", domain.width()},
          {"height", domain.height()},
          {"mean_depth", init.depth.values.mean()},
          {"depth", std::move(depth)},
          {"shaded_preview", httplib::detail::base64_encode(std::string(png.begin(), png.end()))}};
}

class TunerService {
 public:
  TunerService(PixelDomain domain, CameraIntrinsics k, TunerOptions opt = {})
      : domain_(std::move(domain)), k_(k), opt_(std::move(opt)) {
    k_.validate();
  }

  /// Payload for the newest pending request at or after this one.
  nlohmann::json balloon(double kappa) {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw Error("kappa must be positive");
    std::uint64_t mine = 0;
    {
      std::lock_guard<std::mutex> lock(state_);
      mine = ++requested_;
      latest_kappa_ = kappa;
    }
    std::lock_guard<std::mutex> compute(compute_);
    double target = kappa;
    std::uint64_t generation = mine;
    {
      std::lock_guard<std::mutex> lock(state_);
      if (cached_ && cached_generation_ >= mine) return *cached_;
      target = latest_kappa_;
      generation = requested_;
    }
    nlohmann::json payload =
        balloon_payload(target, init_depth_balloon(domain_, k_, target, opt_.balloon), domain_);
    std::lock_guard<std::mutex> lock(state_);
    cached_ = payload;
    cached_generation_ = generation;
    ++computed_;
    return payload;
  }

  void accept(double kappa) {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw Error("kappa must be positive");
    write_json(opt_.config_path, {{"kappa", kappa}});
  }

  /// Number of balloon computations actually run.
  std::uint64_t computed() const {
    std::lock_guard<std::mutex> lock(state_);
    return computed_;
  }

  void install(httplib::Server& server) {
    server.Get("/api/balloon", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("kappa")) return fail(res, 400, "missing kappa parameter");
      double kappa = 0.0;
      try {
        std::size_t used = 0;
        const std::string text = req.get_param_value("kappa");
        kappa = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
      } catch (const std::exception&) {
        return fail(res, 400, "kappa is not a number");
      }
      try {
        res.set_content(balloon(kappa).dump(), "application/json");
      } catch (const Error& e) {
        fail(res, 400, e.what());
      }
    });
    server.Post("/api/accept", [this](const httplib::Request& req, httplib::Response& res) {
      double kappa = 0.0;
      try {
        kappa = nlohmann::json::parse(req.body).at("kappa").get<double>();
      } catch (const std::exception&) {
        return fail(res, 400, "expected a JSON body {\"kappa\": number}");
      }
      try {
        accept(kappa);
      } catch (const Error& e) {
        return fail(res, 400, e.what());
      }
      res.set_content(nlohmann::json{{"kappa", kappa}, {"path", opt_.config_path.string()}}.dump(),
                      "application/json");
    });
    if (!opt_.ui_dir.empty() && server.set_mount_point("/", opt_.ui_dir.string())) return;
    server.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(
          "<!doctype html><html><head><meta charset=\"utf-8\"><title>kappa tuner</title></head>"
          "<body><p>No UI assets configured. Use <code>/api/balloon?kappa=1</code> and "
          "<code>POST /api/accept</code>.</p></body></html>",
          "text/html; charset=utf-8");
    });
  }

 private:
  static void fail(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
  }

  PixelDomain domain_;
  CameraIntrinsics k_;
  TunerOptions opt_;
  mutable std::mutex state_;
  std::mutex compute_;
  std::uint64_t requested_ = 0;
  double latest_kappa_ = 0.0;
  std::optional<nlohmann::json> cached_;
  std::uint64_t cached_generation_ = 0;
  std::uint64_t computed_ = 0;
};

}  // namespace shps

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

// Analytic shapes, albedo patterns and random lightings for synthetic
// ground-truth scenes.

#pragma once

#include "shps/forward_render.hpp"
#include "shps/harmonics_geometry.hpp"
#include "shps/scene_data.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace shps {

struct SyntheticShape {
  PixelDomain domain;
  DepthMap depth;
};

struct BumpParams {
  double base_depth = 10.0;
  double amplitude = 2.5;  // depth units, towards the camera
  double sigma = 22.0;     // pixels
  double mask_radius = 55.0;  // pixels around the principal point
};

/// z(u, v) = base - amplitude exp(-|(u, v) - (u_0, v_0)|^2 / (2 sigma^2))
/// over a disk mask centred on the principal point.
inline SyntheticShape gaussian_bump(int width, int height, const CameraIntrinsics& k,
                                    const BumpParams& p = {}) {
  SyntheticShape s;
  s.domain = PixelDomain::from_predicate(width, height, [&](int u, int v) {
    return std::hypot(u - k.u_0, v - k.v_0) < p.mask_radius;
  });
  s.depth.projection = Projection::perspective;
  s.depth.values.resize(s.domain.size());
  for (int j = 0; j < s.domain.size(); ++j) {
    const Pixel px = s.domain.pixel(j);
    const double r2 = (px.u - k.u_0) * (px.u - k.u_0) + (px.v - k.v_0) * (px.v - k.v_0);
    s.depth.values[j] = p.base_depth - p.amplitude * std::exp(-r2 / (2 * p.sigma * p.sigma));
  }
  return s;
}

struct SphereParams {
  double center_depth = 10.0;
  double radius = 4.0;
  double max_view_angle_deg = 75.0;  // mask drops grazing pixels
};

/// Ray-cast visible cap of a sphere centred on the optical axis.
inline SyntheticShape sphere_cap(int width, int height, const CameraIntrinsics& k,
                                 const SphereParams& p = {}) {
  const double cos_max = std::cos(p.max_view_angle_deg * std::numbers::pi / 180.0);
  const Vec3 center(0.0, 0.0, p.center_depth);
  auto hit = [&](int u, int v, double& depth) {
    const Vec3 d = k.ray(u, v);
    const double a = d.squaredNorm();
    const double b = d.dot(center);
    const double disc = b * b - a * (center.squaredNorm() - p.radius * p.radius);
    if (disc <= 0.0) return false;
    depth = (b - std::sqrt(disc)) / a;
    const Vec3 n = (depth * d - center) / p.radius;
    return -n.dot(d.normalized()) > cos_max;
  };
  SyntheticShape s;
  s.domain = PixelDomain::from_predicate(width, height, [&](int u, int v) {
    double z = 0.0;
    return hit(u, v, z);
  });
  s.depth.projection = Projection::perspective;
  s.depth.values.resize(s.domain.size());
  for (int j = 0; j < s.domain.size(); ++j) {
    const Pixel px = s.domain.pixel(j);
    double z = 0.0;
    hit(px.u, px.v, z);
    s.depth.values[j] = z;
  }
  return s;
}

inline const std::vector<std::string_view>& albedo_pattern_names() {
  static const std::vector<std::string_view> names{"white", "bars", "rectcircle", "checker"};
  return names;
}

/// Piecewise-constant RGB (or gray when channels == 1) albedo patterns.
inline AlbedoMaps albedo_pattern(std::string_view name, const PixelDomain& domain,
                                 int channels = 3) {
  static constexpr std::array<std::array<double, 3>, 5> palette{{
      {0.85, 0.80, 0.75},
      {0.80, 0.35, 0.30},
      {0.30, 0.65, 0.40},
      {0.35, 0.45, 0.85},
      {0.90, 0.80, 0.30},
  }};
  const double w = domain.width();
  const double h = domain.height();
  auto color_index = [&](int u, int v) -> int {
    if (name == "white" || name == "constant") return 0;
    if (name == "bars") return (u * 5 / domain.width()) % 5;
    if (name == "checker") return ((u / 16) + (v / 16)) % 2 == 0 ? 0 : 3;
    if (name == "rectcircle") {
      if (std::hypot(u - 0.62 * w, v - 0.60 * h) < 0.17 * w) return 1;
      if (u > 0.22 * w && u < 0.52 * w && v > 0.25 * h && v < 0.50 * h) return 3;
      return 4;
    }
    throw Error("unknown albedo pattern: " + std::string(name));
  };
  AlbedoMaps rho(domain.size(), channels);
  for (int j = 0; j < domain.size(); ++j) {
    const Pixel p = domain.pixel(j);
    const auto& col = palette[static_cast<std::size_t>(color_index(p.u, p.v))];
    for (int c = 0; c < channels; ++c) {
      rho(j, c) = channels == 3 ? col[static_cast<std::size_t>(c)]
                                : (col[0] + col[1] + col[2]) / 3.0;
    }
  }
  return rho;
}

/// Harmonic lighting vector of a unit directional source: the projection of
/// max(n . w, 0) onto the nine harmonic images. The Legendre expansion of the
/// clamped cosine is 1/4 + x/2 + (5/16) P2(x).
inline Vec9 clamped_cosine_harmonics(const Vec3& w) {
  const double k3 = w.z() * w.z() - 0.5 * (w.x() * w.x() + w.y() * w.y());
  const double s = 15.0 / 32.0;
  Vec9 l;
  l << 0.25, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z(), s * 2 * w.x() * w.y(),
      s * 2 * w.x() * w.z(), s * 2 * w.y() * w.z(), s * 0.5 * (w.x() * w.x() - w.y() * w.y()),
      s * k3 / 3.0;
  return l;
}

/// Random ambient plus one or two directional sources from the camera side
/// (directions within 60 degrees of -z), tinted per channel.
inline LightingSet random_sh_lighting(int images, int channels, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LightingSet set(images, channels);
  for (int i = 0; i < images; ++i) {
    const double ambient = 0.15 + 0.25 * unit(rng);
    const int sources = 1 + static_cast<int>(unit(rng) < 0.5);
    std::vector<Vec9, Eigen::aligned_allocator<Vec9>> lobes;
    std::vector<double> power;
    for (int s = 0; s < sources; ++s) {
      const double cos_t = 1.0 - unit(rng) * (1.0 - std::cos(std::numbers::pi / 3));
      const double sin_t = std::sqrt(1.0 - cos_t * cos_t);
      const double phi = 2.0 * std::numbers::pi * unit(rng);
      lobes.push_back(clamped_cosine_harmonics(
          Vec3(sin_t * std::cos(phi), sin_t * std::sin(phi), -cos_t)));
      power.push_back(1.0 + 1.5 * unit(rng));
    }
    for (int c = 0; c < channels; ++c) {
      Vec9 l = Vec9::Zero();
      l[0] = ambient * (0.8 + 0.2 * unit(rng));
      for (std::size_t s = 0; s < lobes.size(); ++s) {
        l += power[s] * (0.75 + 0.25 * unit(rng)) * lobes[s];
      }
      set.at(i, c) = l;
    }
  }
  return set;
}

/// Sky term plus a few Gaussian lobes on a latitude-longitude grid.
inline EnvironmentMap random_environment_map(std::mt19937_64& rng, int width = 128,
                                             int height = 64, int channels = 3) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  EnvironmentMap env(width, height, channels);
  struct Lobe {
    Vec3 dir;
    double sharpness;
    std::array<double, 3> power;
  };
  std::vector<Lobe> lobes;
  const int count = 1 + static_cast<int>(3 * unit(rng));
  for (int k = 0; k < count; ++k) {
    const double z = 2 * unit(rng) - 1;
    const double phi = 2 * std::numbers::pi * unit(rng);
    const double r = std::sqrt(1 - z * z);
    const double width_rad = 0.25 + 0.5 * unit(rng);
    lobes.push_back({Vec3(r * std::cos(phi), r * std::sin(phi), z),
                     1.0 / (width_rad * width_rad),
                     {2 + 6 * unit(rng), 2 + 6 * unit(rng), 2 + 6 * unit(rng)}});
  }
  const std::array<double, 3> sky{0.2 + 0.4 * unit(rng), 0.2 + 0.4 * unit(rng),
                                  0.2 + 0.4 * unit(rng)};
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      const Vec3 w = env.texel_direction(row, col);
      const double up = std::max(0.0, -w.y());
      for (int c = 0; c < channels; ++c) {
        double v = sky[static_cast<std::size_t>(c % 3)] * (0.3 + 0.7 * up);
        for (const auto& lobe : lobes) {
          v += lobe.power[static_cast<std::size_t>(c % 3)] *
               std::exp(lobe.sharpness * (w.dot(lobe.dir) - 1.0));
        }
        env.at(row, col, c) = v;
      }
    }
  }
  return env;
}

/// Unit normals spread evenly over the whole sphere.
inline NormalMatrix sphere_normals(int count) {
  const SphereQuadrature q = fibonacci_sphere(count);
  NormalMatrix n(count, 3);
  for (int k = 0; k < count; ++k) n.row(k) = q.directions[static_cast<std::size_t>(k)].transpose();
  return n;
}

/// Scales all lighting vectors so the brightest rendered intensity is `peak`.
inline void normalize_exposure(LightingSet& lighting, const AlbedoMaps& albedo,
                               const NormalMatrix& normals, double peak = 0.9) {
  const ImageStack img = render_sh(albedo, lighting, normals);
  double max_value = 0.0;
  for (double x : img.values()) max_value = std::max(max_value, x);
  if (max_value <= 0.0) return;
  const double s = peak / max_value;
  for (int i = 0; i < lighting.images(); ++i) {
    for (int c = 0; c < lighting.channels(); ++c) lighting.at(i, c) *= s;
  }
}

}  // namespace shps

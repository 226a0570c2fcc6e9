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

// Ground-truth image synthesis. Environment lighting is integrated against
// the half-cosine kernel with an equal-area (Fibonacci) sphere quadrature;
// harmonic lighting is evaluated through the nine harmonic images.

#pragma once

#include "shps/harmonics_geometry.hpp"
#include "shps/scene_data.hpp"

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace shps {

struct SphereQuadrature {
  std::vector<Vec3, Eigen::aligned_allocator<Vec3>> directions;
  double weight = 0.0;  // equal weights, summing to 4 pi
};

/// Number of quadrature nodes for a given sampling density along a great
/// circle: nodes are spaced 2 pi / resolution apart, covering area 4 pi.
inline int quadrature_size(int resolution) {
  const double r = resolution;
  return std::max(1, static_cast<int>(std::ceil(r * r / std::numbers::pi)));
}

inline SphereQuadrature fibonacci_sphere(int count) {
  SphereQuadrature q;
  q.directions.reserve(static_cast<std::size_t>(count));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < count; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * k;
    q.directions.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  q.weight = 4.0 * std::numbers::pi / count;
  return q;
}

/// I_c(p) = rho_c(p) sum_k w_k env_c(w_k) max(w_k . n(p), 0), one image.
template <class Derived>
ImageStack render_environment(const Eigen::MatrixBase<Derived>& normals,
                              const AlbedoMaps& albedo, const EnvironmentMap& env,
                              int quadrature_resolution = 256) {
  if (quadrature_resolution < 16) {
    throw Error("render_environment: quadrature resolution must be at least 16");
  }
  const int n = static_cast<int>(normals.rows());
  const int channels = env.channels();
  if (albedo.rows() != n || albedo.cols() != channels) {
    throw Error("render_environment: albedo shape mismatch");
  }
  const SphereQuadrature q = fibonacci_sphere(quadrature_size(quadrature_resolution));
  const int count = static_cast<int>(q.directions.size());
  Eigen::Matrix<double, Eigen::Dynamic, 3> dirs(count, 3);
  Eigen::MatrixXd radiance(count, channels);
  for (int k = 0; k < count; ++k) {
    dirs.row(k) = q.directions[static_cast<std::size_t>(k)].transpose();
    for (int c = 0; c < channels; ++c) {
      radiance(k, c) = env.radiance(q.directions[static_cast<std::size_t>(k)], c);
    }
  }
  ImageStack out(1, channels, n);
  Eigen::VectorXd cosines(count);
  for (int j = 0; j < n; ++j) {
    cosines.noalias() = dirs * normals.row(j).transpose();
    cosines = cosines.cwiseMax(0.0);
    const Eigen::RowVectorXd irradiance = q.weight * (cosines.transpose() * radiance);
    for (int c = 0; c < channels; ++c) out.at(0, c, j) = albedo(j, c) * irradiance[c];
  }
  return out;
}

/// rho (l . h[n]) for every (image, channel); no clamping.
template <class Derived>
ImageStack render_sh(const AlbedoMaps& albedo, const LightingSet& lighting,
                     const Eigen::MatrixBase<Derived>& normals) {
  const int n = static_cast<int>(normals.rows());
  if (albedo.rows() != n || albedo.cols() != lighting.channels()) {
    throw Error("render_sh: albedo shape mismatch");
  }
  const HarmonicImages h = harmonic_images(normals);
  ImageStack out(lighting.images(), lighting.channels(), n);
  for (int i = 0; i < lighting.images(); ++i) {
    for (int c = 0; c < lighting.channels(); ++c) {
      out.channel(i, c) = albedo.col(c).cwiseProduct(h * lighting.at(i, c));
    }
  }
  return out;
}

struct LightingFit {
  LightingSet lighting;
  bool ill_conditioned = false;
};

/// Least-squares harmonic lighting reproducing `images` under known normals
/// and albedo. Order 1 keeps entries 5-9 at zero.
template <class Derived>
LightingFit fit_sh_lighting(const ImageStack& images, const Eigen::MatrixBase<Derived>& normals,
                            const AlbedoMaps& albedo, int order) {
  if (order != 1 && order != 2) throw Error("fit_sh_lighting: order must be 1 or 2");
  const int n = images.pixels();
  if (normals.rows() != n || albedo.rows() != n || albedo.cols() != images.channels()) {
    throw Error("fit_sh_lighting: shape mismatch");
  }
  const int terms = order == 1 ? 4 : 9;
  const HarmonicImages h = harmonic_images(normals);
  LightingFit fit{LightingSet(images.images(), images.channels()), false};
  for (int c = 0; c < images.channels(); ++c) {
    const Eigen::MatrixXd design =
        albedo.col(c).asDiagonal() * h.leftCols(terms);
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < terms) fit.ill_conditioned = true;
    for (int i = 0; i < images.images(); ++i) {
      fit.lighting.at(i, c).head(terms) = qr.solve(images.channel(i, c).eval());
    }
  }
  return fit;
}

struct SyntheticDataset {
  ImageStack images;
  NormalField normals;
};

/// Renders one image per lighting of the given perspective shape. Ground
/// truth normals are n[z] of the shape under the masked gradient operator.
inline SyntheticDataset make_synthetic_dataset(const DepthMap& shape, const AlbedoMaps& albedo,
                                               const LightingSet& lighting,
                                               const CameraIntrinsics& k,
                                               const PixelDomain& domain) {
  shape.validate();
  SyntheticDataset d;
  d.normals = perspective_normals(shape, k, domain);
  d.images = render_sh(albedo, lighting, d.normals.n);
  return d;
}

inline SyntheticDataset make_synthetic_dataset(const DepthMap& shape, const AlbedoMaps& albedo,
                                               const std::vector<EnvironmentMap>& envs,
                                               const CameraIntrinsics& k,
                                               const PixelDomain& domain,
                                               int quadrature_resolution = 256) {
  shape.validate();
  SyntheticDataset d;
  d.normals = perspective_normals(shape, k, domain);
  for (const auto& env : envs) {
    d.images.append(render_environment(d.normals.n, albedo, env, quadrature_resolution));
  }
  return d;
}

}  // namespace shps

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

// Core domain types: camera intrinsics, the masked pixel domain, and the
// per-pixel containers for images, depth, albedo, lighting and environment
// maps. All containers index masked pixels by a linear index j in [0, N).

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shps {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec3 = Eigen::Vector3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;

struct CameraIntrinsics {
  double f_u = 1.0;
  double f_v = 1.0;
  double u_0 = 0.0;
  double v_0 = 0.0;

  void validate() const {
    if (!(f_u > 0.0) || !(f_v > 0.0)) {
      throw Error("intrinsics: focal lengths must be positive");
    }
    if (!std::isfinite(u_0) || !std::isfinite(v_0) || !std::isfinite(f_u) ||
        !std::isfinite(f_v)) {
      throw Error("intrinsics: non-finite value");
    }
  }

  // Back-projection K^{-1} [u, v, 1]^T.
  Vec3 ray(double u, double v) const {
    return {(u - u_0) / f_u, (v - v_0) / f_v, 1.0};
  }
};

struct Pixel {
  int u = 0;  // column
  int v = 0;  // row
};

/// Binary mask over a width x height grid together with the bijection
/// between masked pixels and linear indices.
class PixelDomain {
 public:
  PixelDomain() = default;

  PixelDomain(int width, int height, std::vector<std::uint8_t> mask)
      : width_(width), height_(height), mask_(std::move(mask)) {
    if (width <= 0 || height <= 0) throw Error("domain: invalid dimensions");
    if (mask_.size() != static_cast<std::size_t>(width) * height) {
      throw Error("domain: mask size does not match dimensions");
    }
    index_.assign(mask_.size(), -1);
    for (int v = 0; v < height_; ++v) {
      for (int u = 0; u < width_; ++u) {
        const std::size_t k = static_cast<std::size_t>(v) * width_ + u;
        if (mask_[k]) {
          mask_[k] = 1;
          index_[k] = static_cast<int>(pixels_.size());
          pixels_.push_back({u, v});
        }
      }
    }
    if (pixels_.empty()) throw Error("empty mask");
  }

  template <class Pred>
  static PixelDomain from_predicate(int width, int height, Pred&& inside) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        mask[static_cast<std::size_t>(v) * width + u] = inside(u, v) ? 1 : 0;
      }
    }
    return PixelDomain(width, height, std::move(mask));
  }

  static PixelDomain full(int width, int height) {
    return from_predicate(width, height, [](int, int) { return true; });
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int size() const { return static_cast<int>(pixels_.size()); }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  bool contains(int u, int v) const {
    return u >= 0 && v >= 0 && u < width_ && v < height_ &&
           mask_[static_cast<std::size_t>(v) * width_ + u] != 0;
  }

  /// Linear index of pixel (u, v), or -1 when outside the mask or grid.
  int index(int u, int v) const {
    if (u < 0 || v < 0 || u >= width_ || v >= height_) return -1;
    return index_[static_cast<std::size_t>(v) * width_ + u];
  }

  Pixel pixel(int j) const { return pixels_[static_cast<std::size_t>(j)]; }
  const std::vector<Pixel>& pixels() const { return pixels_; }

  bool operator==(const PixelDomain& o) const {
    return width_ == o.width_ && height_ == o.height_ && mask_ == o.mask_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> mask_;
  std::vector<int> index_;
  std::vector<Pixel> pixels_;
};

/// M x C x N intensities, stored image-major then channel then pixel.
class ImageStack {
 public:
  ImageStack() = default;
  ImageStack(int images, int channels, int pixels)
      : m_(images), c_(channels), n_(pixels),
        values_(static_cast<std::size_t>(images) * channels * pixels, 0.0) {
    if (images < 0 || channels <= 0 || pixels <= 0) {
      throw Error("image stack: invalid shape");
    }
  }

  int images() const { return m_; }
  int channels() const { return c_; }
  int pixels() const { return n_; }

  double& at(int i, int c, int j) { return values_[offset(i, c) + j]; }
  double at(int i, int c, int j) const { return values_[offset(i, c) + j]; }

  Eigen::Map<Eigen::VectorXd> channel(int i, int c) {
    return {values_.data() + offset(i, c), n_};
  }
  Eigen::Map<const Eigen::VectorXd> channel(int i, int c) const {
    return {values_.data() + offset(i, c), n_};
  }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  void append(const ImageStack& other) {
    if (m_ == 0) {
      *this = other;
      return;
    }
    if (other.c_ != c_ || other.n_ != n_) {
      throw Error("image stack: appending mismatched shape");
    }
    values_.insert(values_.end(), other.values_.begin(), other.values_.end());
    m_ += other.m_;
  }

 private:
  std::size_t offset(int i, int c) const {
    return (static_cast<std::size_t>(i) * c_ + c) * n_;
  }

  int m_ = 0;
  int c_ = 0;
  int n_ = 0;
  std::vector<double> values_;
};

enum class Projection { orthographic, perspective };

struct DepthMap {
  Projection projection = Projection::perspective;
  Eigen::VectorXd values;

  void validate() const {
    for (Eigen::Index j = 0; j < values.size(); ++j) {
      const double z = values[j];
      if (!std::isfinite(z)) throw Error("depth: non-finite value");
      if (projection == Projection::perspective && !(z > 0.0)) {
        throw Error("depth: perspective depth must be strictly positive");
      }
    }
  }
};

/// Per-channel reflectance; column c holds channel c over the N pixels.
using AlbedoMaps = Eigen::MatrixXd;

/// One 9-vector per (image, channel), in harmonic-image order
/// [1, n1, n2, n3, n1 n2, n1 n3, n2 n3, n1^2 - n2^2, 3 n3^2 - 1].
class LightingSet {
 public:
  LightingSet() = default;
  LightingSet(int images, int channels)
      : m_(images), c_(channels),
        values_(static_cast<std::size_t>(images) * channels, Vec9::Zero()) {}

  int images() const { return m_; }
  int channels() const { return c_; }

  Vec9& at(int i, int c) { return values_[static_cast<std::size_t>(i) * c_ + c]; }
  const Vec9& at(int i, int c) const {
    return values_[static_cast<std::size_t>(i) * c_ + c];
  }

  bool first_order_only() const {
    for (const auto& l : values_) {
      if (l.tail<5>().cwiseAbs().maxCoeff() != 0.0) return false;
    }
    return true;
  }

 private:
  int m_ = 0;
  int c_ = 0;
  std::vector<Vec9, Eigen::aligned_allocator<Vec9>> values_;
};

/// Latitude-longitude radiance map in the camera frame (x right, y down,
/// z forward). Row r covers polar angle (r + 0.5) pi / height measured from
/// the -y axis ("up"); column k covers azimuth (k + 0.5) 2 pi / width measured
/// in the x-z plane from +z towards +x.
class EnvironmentMap {
 public:
  EnvironmentMap() = default;
  EnvironmentMap(int width, int height, int channels)
      : width_(width), height_(height), c_(channels),
        values_(static_cast<std::size_t>(width) * height * channels, 0.0) {
    if (width <= 0 || height <= 0 || channels <= 0) {
      throw Error("environment map: invalid shape");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return c_; }

  double& at(int row, int col, int c) { return values_[offset(row, col) + c]; }
  double at(int row, int col, int c) const { return values_[offset(row, col) + c]; }

  static Vec3 direction(double polar, double azimuth) {
    const double s = std::sin(polar);
    return {s * std::sin(azimuth), -std::cos(polar), s * std::cos(azimuth)};
  }

  Vec3 texel_direction(int row, int col) const {
    return direction((row + 0.5) * std::numbers::pi / height_,
                     (col + 0.5) * 2.0 * std::numbers::pi / width_);
  }

  /// Bilinear radiance lookup for a unit direction.
  double radiance(const Vec3& w, int c) const {
    const double polar = std::acos(std::clamp(-w.y(), -1.0, 1.0));
    double az = std::atan2(w.x(), w.z());
    if (az < 0.0) az += 2.0 * std::numbers::pi;
    const double y = polar / std::numbers::pi * height_ - 0.5;
    const double x = az / (2.0 * std::numbers::pi) * width_ - 0.5;
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double ty = y - y0;
    const double tx = x - x0;
    auto sample = [&](int row, int col) {
      row = std::clamp(row, 0, height_ - 1);
      col = ((col % width_) + width_) % width_;
      return at(row, col, c);
    };
    return (1 - ty) * ((1 - tx) * sample(y0, x0) + tx * sample(y0, x0 + 1)) +
           ty * ((1 - tx) * sample(y0 + 1, x0) + tx * sample(y0 + 1, x0 + 1));
  }

  void validate() const {
    for (double x : values_) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        throw Error("environment map: radiance must be finite and nonnegative");
      }
    }
  }

 private:
  std::size_t offset(int row, int col) const {
    return (static_cast<std::size_t>(row) * width_ + col) * c_;
  }

  int width_ = 0;
  int height_ = 0;
  int c_ = 0;
  std::vector<double> values_;
};

}  // namespace shps

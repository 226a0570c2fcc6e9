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

// Finite-difference operators on the masked grid, the depth -> normal map
// of a perspective camera, second-order harmonic images and the Jacobian of
// the shading residual with respect to depth.

#pragma once

#include "shps/scene_data.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <vector>

namespace shps {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;
using NormalMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using HarmonicImages = Eigen::Matrix<double, Eigen::Dynamic, 9, Eigen::RowMajor>;

/// Discrete gradient: two sparse maps from pixel values to per-row partial
/// derivatives along u (columns) and v (rows).
struct GradientOperator {
  SparseMatrix d_u;
  SparseMatrix d_v;

  Eigen::Index rows() const { return d_u.rows(); }
  Eigen::Index cols() const { return d_u.cols(); }

  /// Stacked [d_u; d_v].
  SparseMatrix stacked() const {
    SparseMatrix s(d_u.rows() + d_v.rows(), d_u.cols());
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(d_u.nonZeros() + d_v.nonZeros()));
    for (Eigen::Index r = 0; r < d_u.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(d_u, r); it; ++it) {
        t.emplace_back(r, it.col(), it.value());
      }
    }
    for (Eigen::Index r = 0; r < d_v.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(d_v, r); it; ++it) {
        t.emplace_back(d_u.rows() + r, it.col(), it.value());
      }
    }
    s.setFromTriplets(t.begin(), t.end());
    return s;
  }
};

/// Forward differences under the mask. A pixel whose +1 neighbour lies
/// outside the mask falls back to the backward difference; with neither
/// neighbour masked its row is zero.
inline GradientOperator build_gradient_operator(const PixelDomain& domain) {
  const int n = domain.size();
  std::vector<Triplet> tu;
  std::vector<Triplet> tv;
  tu.reserve(2 * static_cast<std::size_t>(n));
  tv.reserve(2 * static_cast<std::size_t>(n));
  auto add = [](std::vector<Triplet>& t, int j, int fwd, int bwd) {
    if (fwd >= 0) {
      t.emplace_back(j, fwd, 1.0);
      t.emplace_back(j, j, -1.0);
    } else if (bwd >= 0) {
      t.emplace_back(j, j, 1.0);
      t.emplace_back(j, bwd, -1.0);
    }
  };
  for (int j = 0; j < n; ++j) {
    const Pixel p = domain.pixel(j);
    add(tu, j, domain.index(p.u + 1, p.v), domain.index(p.u - 1, p.v));
    add(tv, j, domain.index(p.u, p.v + 1), domain.index(p.u, p.v - 1));
  }
  GradientOperator g{SparseMatrix(n, n), SparseMatrix(n, n)};
  g.d_u.setFromTriplets(tu.begin(), tu.end());
  g.d_v.setFromTriplets(tv.begin(), tv.end());
  return g;
}

/// Forward differences with the field held at zero outside the mask. Rows
/// cover every pixel that is masked or has a masked +1 neighbour, so both
/// sides of the boundary see the jump to zero. Used by the balloon, whose
/// surface is pinned to the silhouette.
inline GradientOperator build_dirichlet_gradient_operator(const PixelDomain& domain) {
  std::vector<Triplet> tu;
  std::vector<Triplet> tv;
  int row = 0;
  for (int v = -1; v < domain.height(); ++v) {
    for (int u = -1; u < domain.width(); ++u) {
      const int self = domain.index(u, v);
      const int right = domain.index(u + 1, v);
      const int down = domain.index(u, v + 1);
      if (self < 0 && right < 0 && down < 0) continue;
      if (self >= 0) {
        tu.emplace_back(row, self, -1.0);
        tv.emplace_back(row, self, -1.0);
      }
      if (right >= 0) tu.emplace_back(row, right, 1.0);
      if (down >= 0) tv.emplace_back(row, down, 1.0);
      ++row;
    }
  }
  GradientOperator g{SparseMatrix(row, domain.size()), SparseMatrix(row, domain.size())};
  g.d_u.setFromTriplets(tu.begin(), tu.end());
  g.d_v.setFromTriplets(tv.begin(), tv.end());
  return g;
}

/// Per-pixel pixel-centred coordinates u - u_0 and v - v_0.
struct CenteredCoords {
  Eigen::VectorXd u;
  Eigen::VectorXd v;
};

inline CenteredCoords centered_coords(const PixelDomain& domain,
                                      const CameraIntrinsics& k) {
  CenteredCoords c{Eigen::VectorXd(domain.size()), Eigen::VectorXd(domain.size())};
  for (int j = 0; j < domain.size(); ++j) {
    const Pixel p = domain.pixel(j);
    c.u[j] = p.u - k.u_0;
    c.v[j] = p.v - k.v_0;
  }
  return c;
}

/// Unnormalised perspective normal
///   (f_u z_u, f_v z_v, -z - (u - u_0) z_u - (v - v_0) z_v),
/// which is linear in z. Rows are pixels.
inline NormalMatrix unnormalized_normal(const Eigen::VectorXd& z,
                                        const CameraIntrinsics& k,
                                        const GradientOperator& d,
                                        const CenteredCoords& xy) {
  const Eigen::VectorXd zu = d.d_u * z;
  const Eigen::VectorXd zv = d.d_v * z;
  NormalMatrix n(z.size(), 3);
  n.col(0) = k.f_u * zu;
  n.col(1) = k.f_v * zv;
  n.col(2) = -z - xy.u.cwiseProduct(zu) - xy.v.cwiseProduct(zv);
  return n;
}

inline NormalMatrix unnormalized_normal(const DepthMap& z, const CameraIntrinsics& k,
                                        const GradientOperator& d,
                                        const PixelDomain& domain) {
  return unnormalized_normal(z.values, k, d, centered_coords(domain, k));
}

inline constexpr double kThetaFloor = 1e-9;

struct NormalField {
  NormalMatrix n;             // unit normals
  Eigen::VectorXd theta;      // |n~|, floored at kThetaFloor
  NormalMatrix unnormalized;  // n~
  std::vector<bool> flagged;  // |n~| fell below the floor

  int size() const { return static_cast<int>(n.rows()); }
  int flagged_count() const {
    int c = 0;
    for (bool f : flagged) c += f ? 1 : 0;
    return c;
  }
};

inline NormalField normalize(NormalMatrix unnormalized) {
  const Eigen::Index n = unnormalized.rows();
  NormalField f;
  f.n.resize(n, 3);
  f.theta.resize(n);
  f.flagged.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index j = 0; j < n; ++j) {
    double t = unnormalized.row(j).norm();
    if (!(t >= kThetaFloor)) {
      t = kThetaFloor;
      f.flagged[static_cast<std::size_t>(j)] = true;
    }
    f.theta[j] = t;
    f.n.row(j) = unnormalized.row(j) / t;
  }
  f.unnormalized = std::move(unnormalized);
  return f;
}

/// Normals n[z] of a perspective depth map.
inline NormalField perspective_normals(const Eigen::VectorXd& z, const CameraIntrinsics& k,
                                       const GradientOperator& d,
                                       const CenteredCoords& xy) {
  return normalize(unnormalized_normal(z, k, d, xy));
}

inline NormalField perspective_normals(const DepthMap& z, const CameraIntrinsics& k,
                                       const PixelDomain& domain) {
  return perspective_normals(z.values, k, build_gradient_operator(domain),
                             centered_coords(domain, k));
}

inline Vec9 harmonic_basis(const Vec3& n) {
  Vec9 h;
  h << 1.0, n.x(), n.y(), n.z(), n.x() * n.y(), n.x() * n.z(), n.y() * n.z(),
      n.x() * n.x() - n.y() * n.y(), 3.0 * n.z() * n.z() - 1.0;
  return h;
}

/// d h / d n, a 9x3 matrix. Valid for any (not necessarily unit) n.
inline Eigen::Matrix<double, 9, 3> harmonic_basis_jacobian(const Vec3& n) {
  Eigen::Matrix<double, 9, 3> j;
  j << 0, 0, 0,
       1, 0, 0,
       0, 1, 0,
       0, 0, 1,
       n.y(), n.x(), 0,
       n.z(), 0, n.x(),
       0, n.z(), n.y(),
       2 * n.x(), -2 * n.y(), 0,
       0, 0, 6 * n.z();
  return j;
}

template <class Derived>
HarmonicImages harmonic_images(const Eigen::MatrixBase<Derived>& normals) {
  HarmonicImages h(normals.rows(), 9);
  for (Eigen::Index j = 0; j < normals.rows(); ++j) {
    h.row(j) = harmonic_basis(normals.row(j).transpose()).transpose();
  }
  return h;
}

inline HarmonicImages harmonic_images(const NormalField& f) { return harmonic_images(f.n); }

/// Per-pixel l . h_j.
inline Eigen::VectorXd shading(const Vec9& l, const HarmonicImages& h) { return h * l; }

/// Inputs of the residual r_{i,c,j} = rho_{c,j} l_c^i . h(n~_j[z] / theta_j) - I^i_{c,j}.
struct ResidualModel {
  const PixelDomain& domain;
  const CameraIntrinsics& intrinsics;
  const GradientOperator& gradient;
  const CenteredCoords& coords;
};

/// Entries of d n~_j / d z restricted to the pixels the stencil of j touches.
/// At most three distinct columns (j and one neighbour along each axis).
struct NormalStencil {
  int count = 0;
  std::array<int, 3> col{};
  std::array<Vec3, 3> d{};  // d n~_j / d z_col

  void add(int c, const Vec3& v) {
    for (int k = 0; k < count; ++k) {
      if (col[static_cast<std::size_t>(k)] == c) {
        d[static_cast<std::size_t>(k)] += v;
        return;
      }
    }
    col[static_cast<std::size_t>(count)] = c;
    d[static_cast<std::size_t>(count)] = v;
    ++count;
  }
};

inline NormalStencil normal_stencil(int j, const CameraIntrinsics& k,
                                    const GradientOperator& g, const CenteredCoords& xy) {
  NormalStencil s;
  s.add(j, Vec3(0, 0, -1));
  for (SparseMatrix::InnerIterator it(g.d_u, j); it; ++it) {
    s.add(static_cast<int>(it.col()), Vec3(k.f_u, 0, -xy.u[j]) * it.value());
  }
  for (SparseMatrix::InnerIterator it(g.d_v, j); it; ++it) {
    s.add(static_cast<int>(it.col()), Vec3(0, k.f_v, -xy.v[j]) * it.value());
  }
  return s;
}

/// Sparse Jacobian of the stacked residuals (row (i * C + c) * N + j) with
/// respect to z, with theta held fixed. Flagged pixels get zero rows.
inline SparseMatrix residual_jacobian_z(const ResidualModel& model, const AlbedoMaps& albedo,
                                        const LightingSet& lighting,
                                        const Eigen::VectorXd& z,
                                        const Eigen::VectorXd& theta,
                                        const std::vector<bool>& flagged = {}) {
  const int n = model.domain.size();
  const int m = lighting.images();
  const int c_count = lighting.channels();
  const NormalMatrix nt = unnormalized_normal(z, model.intrinsics, model.gradient, model.coords);
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(m) * c_count * n * 3);
  for (int j = 0; j < n; ++j) {
    if (!flagged.empty() && flagged[static_cast<std::size_t>(j)]) continue;
    const Vec3 nj = nt.row(j).transpose() / theta[j];
    const Eigen::Matrix<double, 9, 3> dh = harmonic_basis_jacobian(nj) / theta[j];
    const NormalStencil st = normal_stencil(j, model.intrinsics, model.gradient, model.coords);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < c_count; ++c) {
        const Vec3 g = albedo(j, c) * (dh.transpose() * lighting.at(i, c));
        const Eigen::Index row = (static_cast<Eigen::Index>(i) * c_count + c) * n + j;
        for (int s = 0; s < st.count; ++s) {
          const double v = g.dot(st.d[static_cast<std::size_t>(s)]);
          if (v != 0.0) t.emplace_back(row, st.col[static_cast<std::size_t>(s)], v);
        }
      }
    }
  }
  SparseMatrix jac(static_cast<Eigen::Index>(m) * c_count * n, n);
  jac.setFromTriplets(t.begin(), t.end());
  return jac;
}

}  // namespace shps

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

#include "shps/scene_data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace shps {
namespace {

TEST(PixelDomain, IndexMapsAreMutualInverses) {
  const auto d = PixelDomain::from_predicate(7, 5, [](int u, int v) { return (u + 2 * v) % 3 != 0; });
  for (int j = 0; j < d.size(); ++j) {
    const Pixel p = d.pixel(j);
    EXPECT_EQ(d.index(p.u, p.v), j);
  }
  int count = 0;
  for (int v = 0; v < 5; ++v) {
    for (int u = 0; u < 7; ++u) {
      const int j = d.index(u, v);
      if (j >= 0) {
        ++count;
        EXPECT_EQ(d.pixel(j).u, u);
        EXPECT_EQ(d.pixel(j).v, v);
      }
    }
  }
  EXPECT_EQ(count, d.size());
}

TEST(PixelDomain, OutsideGridIsMinusOne) {
  const auto d = PixelDomain::full(3, 2);
  EXPECT_EQ(d.index(-1, 0), -1);
  EXPECT_EQ(d.index(3, 0), -1);
  EXPECT_EQ(d.index(0, 2), -1);
  EXPECT_EQ(d.size(), 6);
}

TEST(PixelDomain, EmptyMaskThrows) {
  try {
    PixelDomain d(4, 4, std::vector<std::uint8_t>(16, 0));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty mask");
  }
}

TEST(PixelDomain, MaskSizeMismatchThrows) {
  EXPECT_THROW(PixelDomain(4, 4, std::vector<std::uint8_t>(15, 1)), Error);
}

TEST(CameraIntrinsics, Validation) {
  EXPECT_NO_THROW((CameraIntrinsics{1, 2, 0, 0}.validate()));
  EXPECT_THROW((CameraIntrinsics{0, 2, 0, 0}.validate()), Error);
  EXPECT_THROW((CameraIntrinsics{1, -2, 0, 0}.validate()), Error);
  EXPECT_THROW((CameraIntrinsics{1, 1, NAN, 0}.validate()), Error);
}

TEST(CameraIntrinsics, RayIsInverseProjection) {
  const CameraIntrinsics k{500, 400, 320, 240};
  const Vec3 x = 3.0 * k.ray(100, 50);
  EXPECT_NEAR(k.f_u * x.x() / x.z() + k.u_0, 100.0, 1e-12);
  EXPECT_NEAR(k.f_v * x.y() / x.z() + k.v_0, 50.0, 1e-12);
}

TEST(ImageStack, LayoutAndAppend) {
  ImageStack a(2, 3, 4);
  a.at(1, 2, 3) = 5.0;
  EXPECT_EQ(a.channel(1, 2)[3], 5.0);
  ImageStack b(1, 3, 4);
  b.at(0, 0, 0) = 7.0;
  a.append(b);
  EXPECT_EQ(a.images(), 3);
  EXPECT_EQ(a.at(2, 0, 0), 7.0);
  EXPECT_EQ(a.at(1, 2, 3), 5.0);
  EXPECT_THROW(a.append(ImageStack(1, 2, 4)), Error);
}

TEST(DepthMap, PerspectiveMustBePositive) {
  DepthMap z{Projection::perspective, Eigen::Vector3d(1, 2, 0)};
  EXPECT_THROW(z.validate(), Error);
  z.projection = Projection::orthographic;
  EXPECT_NO_THROW(z.validate());
  z.values[0] = INFINITY;
  EXPECT_THROW(z.validate(), Error);
}

TEST(LightingSet, FirstOrderOnly) {
  LightingSet l(2, 3);
  l.at(1, 2) << 0.2, 0.1, 0, -1, 0, 0, 0, 0, 0;
  EXPECT_TRUE(l.first_order_only());
  l.at(0, 1)[8] = 1e-300;
  EXPECT_FALSE(l.first_order_only());
}

TEST(EnvironmentMap, DirectionConventions) {
  const Vec3 up = EnvironmentMap::direction(0.0, 0.0);
  EXPECT_NEAR(up.y(), -1.0, 1e-15);
  const Vec3 fwd = EnvironmentMap::direction(std::numbers::pi / 2, 0.0);
  EXPECT_NEAR(fwd.z(), 1.0, 1e-15);
  const Vec3 right = EnvironmentMap::direction(std::numbers::pi / 2, std::numbers::pi / 2);
  EXPECT_NEAR(right.x(), 1.0, 1e-15);
}

TEST(EnvironmentMap, RadianceAtTexelCentreIsTexelValue) {
  EnvironmentMap env(16, 8, 1);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 16; ++c) env.at(r, c, 0) = r * 16 + c;
  }
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 16; ++c) {
      EXPECT_NEAR(env.radiance(env.texel_direction(r, c), 0), r * 16 + c, 1e-9);
    }
  }
}

TEST(EnvironmentMap, NegativeRadianceRejected) {
  EnvironmentMap env(4, 2, 1);
  env.at(0, 0, 0) = -1.0;
  EXPECT_THROW(env.validate(), Error);
}

}  // namespace
}  // namespace shps

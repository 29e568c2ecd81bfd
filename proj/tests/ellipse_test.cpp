// Copyright 2026 The Kira Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kira/ellipse.hpp"

namespace kira {
namespace {

constexpr double kPi = std::numbers::pi;

double quad(const EllipseCoeffs& k, double x, double y) {
  return k.cxx * x * x + k.cyy * y * y + k.cxy * x * y;
}

TEST(EllipseCoeffs, UnitCircle) {
  for (double th : {0.0, 0.3, -1.2, kPi / 2}) {
    auto k = ellipse_coeffs(1, 1, th);
    EXPECT_NEAR(k.cxx, 1, 1e-15);
    EXPECT_NEAR(k.cyy, 1, 1e-15);
    EXPECT_NEAR(k.cxy, 0, 1e-15);
  }
}

TEST(EllipseCoeffs, AxisAligned) {
  auto k = ellipse_coeffs(2, 1, 0);
  EXPECT_DOUBLE_EQ(k.cxx, 0.25);
  EXPECT_DOUBLE_EQ(k.cyy, 1.0);
  EXPECT_DOUBLE_EQ(k.cxy, 0.0);
  // Boundary point (2, 0) lies on the unit-radius curve.
  EXPECT_DOUBLE_EQ(quad(k, 2, 0), 1.0);

  auto r = ellipse_coeffs(2, 1, kPi / 2);
  EXPECT_NEAR(r.cxx, 1.0, 1e-15);
  EXPECT_NEAR(r.cyy, 0.25, 1e-15);
  EXPECT_NEAR(r.cxy, 0.0, 1e-15);
  EXPECT_NEAR(quad(r, 0, 2), 1.0, 1e-15);
}

TEST(EllipseCoeffs, RejectsBadAxes) {
  EXPECT_THROW(ellipse_coeffs(1, 2, 0), Error);
  EXPECT_THROW(ellipse_coeffs(1, 0, 0), Error);
  EXPECT_THROW(ellipse_coeffs(1, -1, 0), Error);
  try {
    ellipse_coeffs(1, 2, 0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidAxes);
  }
}

TEST(EllipseAxes, Inverses) {
  auto c = ellipse_axes(1, 1, 0);
  EXPECT_DOUBLE_EQ(c.a, 1);
  EXPECT_DOUBLE_EQ(c.b, 1);
  EXPECT_EQ(c.theta, 0);
  auto e = ellipse_axes(0.25, 1, 0);
  EXPECT_DOUBLE_EQ(e.a, 2);
  EXPECT_DOUBLE_EQ(e.b, 1);
  EXPECT_EQ(e.theta, 0);
  auto v = ellipse_axes(1, 0.25, 0);
  EXPECT_DOUBLE_EQ(v.a, 2);
  EXPECT_NEAR(v.theta, kPi / 2, 1e-15);
}

TEST(EllipseAxes, RejectsIndefinite) {
  EXPECT_THROW(ellipse_axes(1, 1, 2), Error);
  EXPECT_THROW(ellipse_axes(-1, 1, 0), Error);
  EXPECT_THROW(ellipse_axes(1, 0, 0), Error);
}

double angle_diff(double t1, double t2) {
  double d = std::fmod(t1 - t2, kPi);
  if (d > kPi / 2) d -= kPi;
  if (d < -kPi / 2) d += kPi;
  return std::abs(d);
}

TEST(EllipseProperty, RoundTripRandom) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ua(0.1, 100), ur(0.01, 0.999), ut(-kPi / 2, kPi / 2);
  for (int i = 0; i < 5000; ++i) {
    const double a = ua(rng), b = a * ur(rng);
    double th = ut(rng);
    if (th == -kPi / 2) th = kPi / 2;
    auto k = ellipse_coeffs(a, b, th);
    auto e = ellipse_axes(k.cxx, k.cyy, k.cxy);
    ASSERT_NEAR(e.a / a, 1, 1e-9);
    ASSERT_NEAR(e.b / b, 1, 1e-9);
    ASSERT_LT(angle_diff(e.theta, th), 1e-9);
    ASSERT_GT(e.theta, -kPi / 2);
    ASSERT_LE(e.theta, kPi / 2);
  }
}

TEST(EllipseArrays, BatchMatchesScalar) {
  std::vector<double> a{3, 2}, b{1, 2}, t{0.4, 0};
  auto k = ellipse_coeffs(a, b, t);
  ASSERT_EQ(k.cxx.size(), 2u);
  auto ax = ellipse_axes(k.cxx, k.cyy, k.cxy);
  EXPECT_NEAR(ax.a[0], 3, 1e-12);
  EXPECT_NEAR(ax.theta[0], 0.4, 1e-12);
  EXPECT_NEAR(ax.b[1], 2, 1e-12);
  std::vector<double> short_t{0};
  EXPECT_THROW(ellipse_coeffs(a, b, short_t), Error);
}

TEST(MaskEllipse, EmptyBatchLeavesMask) {
  Mask m(10, 10, 0);
  m(3, 3) = 1;
  Mask before = m;
  mask_ellipse(m, EllipseBatch{}, 1.0);
  EXPECT_EQ(m, before);
}

TEST(MaskEllipse, CountMatchesCenterInCircleOracle) {
  Mask m(21, 21, 0);
  EllipseBatch batch;
  batch.push_back(10, 10, 3.2, 3.2, 0.7);
  mask_ellipse(m, batch, 1.0);
  std::size_t expected = 0, got = 0;
  for (int y = 0; y < 21; ++y) {
    for (int x = 0; x < 21; ++x) {
      if ((x - 10) * (x - 10) + (y - 10) * (y - 10) <= 3.2 * 3.2) ++expected;
      got += m(x, y);
    }
  }
  EXPECT_EQ(got, expected);
}

TEST(MaskEllipse, IdempotentUnion) {
  Mask m(30, 20, 0);
  m(0, 0) = 1;
  EllipseBatch batch;
  batch.push_back(12.3, 8.9, 5, 2, 0.5);
  batch.push_back(29, 19, 4, 4, 0);
  mask_ellipse(m, batch, 1.5);
  Mask once = m;
  mask_ellipse(m, batch, 1.5);
  EXPECT_EQ(m, once);
  EXPECT_EQ(m(0, 0), 1);
}

}  // namespace
}  // namespace kira

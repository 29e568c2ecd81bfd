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

#include "kira/aperture.hpp"
#include "oracles.hpp"

namespace kira {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(SumCircle, ZeroRadius) {
  Image img(20, 20, 1.0);
  auto r = sum_circle(img, CircleBatch{{10}, {10}, {0}});
  EXPECT_EQ(r.flux[0], 0.0);
  EXPECT_EQ(r.flag[0], 0u);
}

TEST(SumCircle, UniformDiskArea) {
  Image img(30, 30, 1.0);
  auto r = sum_circle(img, CircleBatch{{15}, {15}, {5}});
  const double oracle = oracle::circle_flux(img, 15, 15, 5, 101);
  EXPECT_NEAR(oracle / (kPi * 25), 1.0, 0.002);
  EXPECT_NEAR(r.flux[0] / (kPi * 25), 1.0, 0.005);
  EXPECT_NEAR(r.flux[0] / oracle, 1.0, 0.005);
  EXPECT_EQ(r.flag[0], 0u);
}

TEST(SumCircle, EdgeTruncation) {
  Image img(30, 30, 1.0);
  auto r = sum_circle(img, CircleBatch{{1}, {15}, {5}});
  EXPECT_TRUE(r.flag[0] & flag::kTruncated);
  const double oracle = oracle::circle_flux(img, 1, 15, 5, 101);
  EXPECT_LT(oracle, kPi * 25 * 0.8);
  EXPECT_NEAR(r.flux[0] / oracle, 1.0, 0.005);
}

TEST(SumCircle, ErrorsAndVariance) {
  Image img(10, 10, 2.0);
  EXPECT_THROW(sum_circle(img, CircleBatch{{5}, {5}, {-1}}), Error);
  EXPECT_THROW(sum_circle(img, CircleBatch{{5, 6}, {5}, {1}}), Error);
  Image var(10, 10, 4.0);
  PhotometryOptions o;
  o.variance = &var;
  auto r = sum_circle(img, CircleBatch{{5}, {5}, {2}}, o);
  // Uniform variance 4 over area A: err = sqrt(4A) = 2*sqrt(A), flux = 2A.
  EXPECT_NEAR(r.fluxerr[0], 2.0 * std::sqrt(r.flux[0] / 2.0), 1e-12);
  o.subpix = 0;
  EXPECT_THROW(sum_circle(img, CircleBatch{{5}, {5}, {2}}, o), Error);
}

TEST(SumCircle, MaskedPixelsExcluded) {
  Image img(20, 20, 1.0);
  Mask mask(20, 20, 0);
  mask(10, 10) = 1;
  PhotometryOptions o;
  o.mask = &mask;
  auto with = sum_circle(img, CircleBatch{{10}, {10}, {4}}, o);
  auto without = sum_circle(img, CircleBatch{{10}, {10}, {4}});
  EXPECT_NEAR(without.flux[0] - with.flux[0], 1.0, 1e-12);
  EXPECT_EQ(with.flag[0], 0u);
}

TEST(SumEllipse, CircleDegeneracy) {
  std::mt19937_64 rng(3);
  Image img(40, 40);
  std::uniform_real_distribution<double> u(0, 10);
  for (auto& v : img.values()) v = u(rng);
  for (double th : {0.0, 0.7, -1.3}) {
    EllipseBatch eb;
    eb.push_back(19.3, 20.6, 4, 4, th);
    auto e = sum_ellipse(img, eb, 1.5);
    auto c = sum_circle(img, CircleBatch{{19.3}, {20.6}, {6}});
    EXPECT_NEAR(e.flux[0], c.flux[0], 1e-9 * c.flux[0]);
  }
}

TEST(SumEllipse, UniformEllipseArea) {
  Image img(30, 30, 1.0);
  EllipseBatch eb;
  eb.push_back(15, 15, 4, 2, 0);
  auto e = sum_ellipse(img, eb, 1.0);
  const double oracle = oracle::quadratic_flux(img, 15, 15, 1 / 16.0, 1 / 4.0, 0, 1.0, 101);
  EXPECT_NEAR(oracle / (kPi * 8), 1.0, 0.002);
  EXPECT_NEAR(e.flux[0] / (kPi * 8), 1.0, 0.005);
}

TEST(SumEllipse, ThetaPlusPiSymmetric) {
  std::mt19937_64 rng(5);
  Image img(40, 40);
  std::uniform_real_distribution<double> u(0, 10);
  for (auto& v : img.values()) v = u(rng);
  EllipseBatch eb;
  eb.push_back(20.2, 19.7, 6, 2.5, 0.4);
  eb.push_back(20.2, 19.7, 6, 2.5, 0.4 + kPi);
  auto e = sum_ellipse(img, eb, 1.0);
  EXPECT_NEAR(e.flux[0], e.flux[1], 1e-9 * e.flux[0]);
}

TEST(SumEllipse, InvalidAxes) {
  Image img(10, 10, 1.0);
  EllipseBatch eb;
  eb.push_back(5, 5, 1, 2, 0);
  EXPECT_THROW(sum_ellipse(img, eb, 1.0), Error);
}

TEST(KronRadius, ZeroImageFlagged) {
  Image img(30, 30, 0.0);
  EllipseBatch eb;
  eb.push_back(15, 15, 2, 2, 0);
  auto k = kron_radius(img, eb);
  EXPECT_EQ(k.kron_r[0], 0.0);
  EXPECT_TRUE(k.flag[0] & flag::kNoFlux);
}

TEST(KronRadius, UniformDisk) {
  const double R = 12;
  Image img(60, 60, 0.0);
  for (std::size_t y = 0; y < 60; ++y) {
    for (std::size_t x = 0; x < 60; ++x) {
      if (std::hypot(x - 30.0, y - 30.0) <= R) img(x, y) = 1.0;
    }
  }
  // Pixel-loop oracle: mean radius over the lit pixels.
  double num = 0, den = 0;
  for (std::size_t y = 0; y < 60; ++y) {
    for (std::size_t x = 0; x < 60; ++x) {
      num += img(x, y) * std::hypot(x - 30.0, y - 30.0);
      den += img(x, y);
    }
  }
  EXPECT_NEAR(num / den, 2 * R / 3, 0.02 * 2 * R / 3);
  EllipseBatch eb;
  eb.push_back(30, 30, 3, 3, 0);
  auto k = kron_radius(img, eb, 6.0);
  EXPECT_NEAR(k.kron_r[0] * 3, num / den, 1e-9);
  EXPECT_NEAR(k.kron_r[0] * 3, 2 * R / 3, 0.02 * 2 * R / 3);
}

TEST(KronRadius, ScaleInvariant) {
  std::mt19937_64 rng(9);
  Image img(40, 40);
  std::uniform_real_distribution<double> u(-1, 5);
  for (auto& v : img.values()) v = u(rng);
  Image scaled = img;
  for (auto& v : scaled.values()) v *= 7.5;
  EllipseBatch eb;
  eb.push_back(20, 20, 3, 2, 0.3);
  auto k1 = kron_radius(img, eb, 4.0);
  auto k2 = kron_radius(scaled, eb, 4.0);
  EXPECT_NEAR(k1.kron_r[0], k2.kron_r[0], 1e-12);
}

TEST(BatchOps, PreserveLengthAndOrder) {
  Image img(50, 50, 1.0);
  CircleBatch cb{{10, 25, 40, 3}, {10, 25, 40, 45}, {1, 3, 2, 6}};
  auto r = sum_circle(img, cb);
  ASSERT_EQ(r.flux.size(), 4u);
  EXPECT_LT(r.flux[0], r.flux[2]);
  EXPECT_LT(r.flux[2], r.flux[1]);
  EXPECT_TRUE(r.flag[3] & flag::kTruncated);
  EllipseBatch eb;
  for (int i = 0; i < 5; ++i) eb.push_back(10 + 7 * i, 25, 1 + i, 1, 0);
  auto e = sum_ellipse(img, eb, 1.0);
  ASSERT_EQ(e.flux.size(), 5u);
  for (int i = 1; i < 5; ++i) EXPECT_GT(e.flux[i], e.flux[i - 1]);
  auto k = kron_radius(img, eb);
  ASSERT_EQ(k.kron_r.size(), 5u);
}

// Property: subpix-5 sums stay within 0.5% of the subpix-101 oracle.
TEST(PhotometryProperty, AgreesWithFineGridOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(15, 35), val(0.5, 1.5), rad(2, 10), ratio(0.3, 1.0),
      ang(-kPi / 2, kPi / 2);
  for (int trial = 0; trial < 60; ++trial) {
    Image img(50, 50);
    for (auto& v : img.values()) v = val(rng);
    const double x = pos(rng), y = pos(rng);
    if (trial % 2 == 0) {
      const double r = rad(rng);
      auto got = sum_circle(img, CircleBatch{{x}, {y}, {r}});
      const double ref = oracle::circle_flux(img, x, y, r, 101);
      EXPECT_NEAR(got.flux[0] / ref, 1.0, 0.005) << "circle r=" << r;
    } else {
      const double a = rad(rng), b = a * ratio(rng), th = ang(rng);
      EllipseBatch eb;
      eb.push_back(x, y, a, b, th);
      auto got = sum_ellipse(img, eb, 1.0);
      auto k = ellipse_coeffs(a, b, th);
      const double ref = oracle::quadratic_flux(img, x, y, k.cxx, k.cyy, k.cxy, 1.0, 101);
      EXPECT_NEAR(got.flux[0] / ref, 1.0, 0.005) << "ellipse a=" << a << " b=" << b;
    }
  }
}

}  // namespace
}  // namespace kira

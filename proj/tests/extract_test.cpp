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
#include <map>
#include <numeric>
#include <random>

#include "kira/background.hpp"
#include "kira/extract.hpp"
#include "kira/synth.hpp"

namespace kira {
namespace {

Image sky(std::size_t w, std::size_t h, double bg, std::vector<fits::GaussianSource> src,
          std::optional<fits::NoiseSpec> noise = std::nullopt) {
  return fits::synth_image(w, h, bg, src, noise).pixels;
}

// Independent union-find labeling of pixels strictly above `t` (8-connected).
struct OracleComponent {
  double sum = 0, sx = 0, sy = 0;
  std::size_t n = 0;
};
std::vector<OracleComponent> oracle_components(const Image& img, double t) {
  const std::size_t w = img.width(), h = img.height();
  std::vector<std::size_t> parent(w * h);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  auto above = [&](std::size_t x, std::size_t y) { return img(x, y) > t; };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!above(x, y)) continue;
      for (int dy = -1; dy <= 0; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx >= 0) continue;
          const long nx = static_cast<long>(x) + dx, ny = static_cast<long>(y) + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(w)) continue;
          if (above(nx, ny)) parent[find(y * w + x)] = find(ny * w + nx);
        }
      }
    }
  }
  std::map<std::size_t, OracleComponent> comps;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!above(x, y)) continue;
      auto& c = comps[find(y * w + x)];
      c.sum += img(x, y);
      c.sx += img(x, y) * x;
      c.sy += img(x, y) * y;
      ++c.n;
    }
  }
  std::vector<OracleComponent> out;
  for (auto& [k, c] : comps) out.push_back(c);
  return out;
}

ExtractParams params(double thresh = 1.5, std::size_t min_area = 5) {
  ExtractParams p;
  p.thresh_sigma = thresh;
  p.min_area = min_area;
  return p;
}

TEST(Extract, ZeroImageHasNoObjects) {
  EXPECT_TRUE(extract(Image(64, 64, 0.0), 1.0, params()).empty());
}

TEST(Extract, SingleGaussianBlob) {
  auto img = sky(64, 64, 0, {{32, 32, 1000, 2.0}});
  auto objs = extract(img, 1.0, params());
  ASSERT_EQ(objs.size(), 1u);
  const auto& o = objs[0];
  EXPECT_NEAR(o.x, 32, 0.05);
  EXPECT_NEAR(o.y, 32, 0.05);
  EXPECT_NEAR(o.a / o.b, 1.0, 0.05);
  // Moment oracle: the blob is symmetric so both axes equal the flux-weighted
  // RMS radius per axis over the detected footprint.
  double s = 0, sxx = 0;
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 64; ++x) {
      if (img(x, y) > 1.5) {
        s += img(x, y);
        sxx += img(x, y) * (x - 32.0) * (x - 32.0);
      }
    }
  }
  EXPECT_NEAR(o.a, std::sqrt(sxx / s), 1e-6);
  EXPECT_NEAR(o.flux, s, 1e-6);
  EXPECT_EQ(o.flag, 0u);
  EXPECT_EQ(o.peak, 1000.0);
}

TEST(Extract, TwoBlobsMatchLabelingOracle) {
  auto img = sky(80, 64, 0, {{25, 30, 1000, 2.0}, {45, 30, 700, 2.0}});
  auto objs = extract(img, 1.0, params());
  auto oracle = oracle_components(img, 1.5);
  ASSERT_EQ(oracle.size(), 2u);
  ASSERT_EQ(objs.size(), 2u);
  EXPECT_NEAR(objs[0].x, 25, 0.05);
  EXPECT_NEAR(objs[1].x, 45, 0.05);
  for (const auto& c : oracle) {
    const double cx = c.sx / c.sum;
    const auto& o = std::abs(cx - objs[0].x) < 1 ? objs[0] : objs[1];
    EXPECT_NEAR(o.x, cx, 1e-9);
    EXPECT_NEAR(o.y, c.sy / c.sum, 1e-9);
    EXPECT_EQ(o.npix, c.n);
  }
}

TEST(Extract, SortedByFluxThenPosition) {
  Image img(20, 10, 0.0);
  // Two identical 2x3 plateaus; equal flux breaks ties by (y, x).
  for (std::size_t y = 5; y < 7; ++y) {
    for (std::size_t x = 2; x < 5; ++x) img(x, y) = 10;
    for (std::size_t x = 12; x < 15; ++x) img(x, y) = 10;
  }
  for (std::size_t x = 8; x < 11; ++x) {
    img(x, 1) = 20;
    img(x, 2) = 20;
  }
  auto objs = extract(img, 1.0, params(1.5, 1));
  ASSERT_EQ(objs.size(), 3u);
  EXPECT_NEAR(objs[0].x, 9, 1e-12);
  EXPECT_NEAR(objs[1].x, 3, 1e-12);
  EXPECT_NEAR(objs[2].x, 13, 1e-12);
}

TEST(Extract, ConnectivityAndMinArea) {
  Image img(10, 10, 0.0);
  img(2, 2) = img(3, 3) = img(4, 4) = 5;
  auto p8 = params(1.0, 1);
  EXPECT_EQ(extract(img, 1.0, p8).size(), 1u);
  auto p4 = p8;
  p4.connectivity = 4;
  EXPECT_EQ(extract(img, 1.0, p4).size(), 3u);
  auto big = p8;
  big.min_area = 4;
  EXPECT_TRUE(extract(img, 1.0, big).empty());
  auto bad = p8;
  bad.connectivity = 6;
  EXPECT_THROW(extract(img, 1.0, bad), Error);
}

TEST(Extract, SinglePixelAxesFloored) {
  Image img(9, 9, 0.0);
  img(4, 4) = 3;
  auto objs = extract(img, 1.0, params(1.0, 1));
  ASSERT_EQ(objs.size(), 1u);
  EXPECT_EQ(objs[0].a, kMinAxis);
  EXPECT_EQ(objs[0].b, kMinAxis);
  EXPECT_EQ(objs[0].theta, 0.0);
}

TEST(Extract, BorderObjectsTruncated) {
  auto img = sky(40, 40, 0, {{1, 20, 500, 2.0}});
  auto objs = extract(img, 1.0, params());
  ASSERT_EQ(objs.size(), 1u);
  EXPECT_TRUE(objs[0].flag & flag::kTruncated);
}

TEST(Extract, MaskExcludesAndFlagsOverlap) {
  auto img = sky(60, 40, 0, {{20, 20, 500, 2.0}, {40, 20, 500, 2.0}});
  auto p = params();
  p.mask = Mask(60, 40, 0);
  for (std::size_t y = 0; y < 40; ++y) {
    for (std::size_t x = 35; x < 60; ++x) (*p.mask)(x, y) = 1;
  }
  for (std::size_t x = 0; x < 60; ++x) (*p.mask)(x, 0) = 1;
  auto objs = extract(img, 1.0, p);
  ASSERT_EQ(objs.size(), 2u);
  EXPECT_NEAR(objs[0].x, 20, 0.05);
  EXPECT_EQ(objs[0].flag, 0u);
  // What is left of the second blob is its unmasked wing, cut by the mask.
  EXPECT_LT(objs[1].x, 35);
  EXPECT_TRUE(objs[1].flag & flag::kMaskedOverlap);
  EXPECT_FALSE(objs[1].flag & flag::kTruncated);
}

TEST(Extract, ObjectInvariants) {
  auto img = sky(128, 128, 0,
                 {{30, 40, 800, 3.0}, {90, 80, 400, 1.5}, {60, 100, 1500, 2.5}, {100, 20, 300, 4.0}},
                 fits::NoiseSpec{1.0, 5});
  auto objs = extract(img, 1.0, params(3.0, 5));
  ASSERT_GE(objs.size(), 4u);
  for (const auto& o : objs) {
    EXPECT_GE(o.a, o.b);
    EXPECT_GT(o.b, 0);
    EXPECT_GE(o.npix, 5u);
    EXPECT_GT(o.theta, -M_PI / 2);
    EXPECT_LE(o.theta, M_PI / 2);
    auto k = ellipse_coeffs(o.a, o.b, o.theta);
    EXPECT_NEAR(k.cxx, o.cxx, 1e-9 * std::abs(o.cxx));
    EXPECT_NEAR(k.cyy, o.cyy, 1e-9 * std::abs(o.cyy));
    EXPECT_NEAR(k.cxy, o.cxy, 1e-9 * std::max(std::abs(o.cxx), std::abs(o.cyy)));
  }
  for (std::size_t i = 1; i < objs.size(); ++i) EXPECT_GE(objs[i - 1].flux, objs[i].flux);
}

TEST(ExtractProperty, TranslationEquivariance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_real_distribution<double> pos(15, 45), amp(100, 2000), sig(1.0, 3.0);
    std::vector<fits::GaussianSource> src;
    for (int k = 0; k < 3; ++k) src.push_back({pos(rng), pos(rng), amp(rng), sig(rng)});
    auto base = sky(64, 64, 0, src, fits::NoiseSpec{1.0, rng()});
    const std::size_t dx = rng() % 20, dy = rng() % 20;
    Image shifted(64 + 20, 64 + 20, 0.0);
    for (std::size_t y = 0; y < 64; ++y) {
      for (std::size_t x = 0; x < 64; ++x) shifted(x + dx, y + dy) = base(x, y);
    }
    // Keep both images away from the border so no TRUNCATED difference.
    Image padded(64 + 20, 64 + 20, 0.0);
    for (std::size_t y = 0; y < 64; ++y) {
      for (std::size_t x = 0; x < 64; ++x) padded(x, y) = base(x, y);
    }
    auto p = params(4.0, 5);
    auto a = extract(padded, 1.0, p);
    auto b = extract(shifted, 1.0, p);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(b[i].x, a[i].x + dx, 1e-9);
      EXPECT_NEAR(b[i].y, a[i].y + dy, 1e-9);
      EXPECT_EQ(b[i].flux, a[i].flux);
      EXPECT_EQ(b[i].npix, a[i].npix);
      EXPECT_EQ(b[i].a, a[i].a);
      EXPECT_EQ(b[i].b, a[i].b);
      EXPECT_EQ(b[i].theta, a[i].theta);
    }
  }
}

TEST(ExtractProperty, BackgroundInvariance) {
  std::vector<fits::GaussianSource> src{{40, 40, 600, 2.0}, {90, 60, 900, 2.5}, {60, 100, 400, 1.8}};
  auto img = sky(128, 128, 0, src, fits::NoiseSpec{2.0, 21});
  Image lifted = img;
  for (auto& v : lifted.values()) v += 250.0;
  BackgroundOptions bo{32, 3.0, 5};
  auto run = [&](const Image& im) {
    auto bkg = makeback(im, bo);
    return extract(subbackarray(im, bkg), bkg, params(5.0, 5));
  };
  auto a = run(img), b = run(lifted);
  ASSERT_EQ(a.size(), 3u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].x, b[i].x, 0.01);
    EXPECT_NEAR(a[i].y, b[i].y, 0.01);
  }
}

TEST(ExtractProperty, MaskedSecondPassFindsNothingInsideMasks) {
  std::vector<fits::GaussianSource> src{{30, 30, 60, 2.0}, {80, 40, 50, 2.5}, {50, 90, 40, 1.5}};
  auto img = sky(128, 128, 10, src, fits::NoiseSpec{1.0, 8});
  BackgroundOptions bo{32, 3.0, 5};
  auto bkg = makeback(img, bo);
  auto p = params(3.0, 5);
  auto first = extract(subbackarray(img, bkg), bkg, p);
  ASSERT_FALSE(first.empty());
  Mask mask(128, 128, 0);
  mask_ellipse(mask, ellipses_of(first), 3.0);
  auto bkg2 = makeback(img, mask, bo);
  p.mask = mask;
  auto second = extract(subbackarray(img, bkg2), bkg2, p);
  for (const auto& o : second) {
    const auto x = static_cast<std::size_t>(std::lround(o.x));
    const auto y = static_cast<std::size_t>(std::lround(o.y));
    EXPECT_FALSE(mask(x, y)) << "object at " << o.x << "," << o.y;
  }
}

TEST(Extract, RmsFromModelMustMatchShape) {
  auto m = BackgroundModel::from_mesh(16, 16, 8, Matrix<double>(2, 2, 0.0), Matrix<double>(2, 2, 1.0));
  EXPECT_THROW(extract(Image(8, 8, 0.0), m, params()), Error);
}

}  // namespace
}  // namespace kira

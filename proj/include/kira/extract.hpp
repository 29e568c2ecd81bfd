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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "kira/background.hpp"
#include "kira/ellipse.hpp"
#include "kira/error.hpp"
#include "kira/matrix.hpp"

namespace kira {

namespace flag {
inline constexpr std::uint32_t kTruncated = 1u << 0;
inline constexpr std::uint32_t kSaturated = 1u << 1;  // reserved, never set
inline constexpr std::uint32_t kMaskedOverlap = 1u << 2;
inline constexpr std::uint32_t kNoFlux = 1u << 3;  // kron_radius: zero denominator
}  // namespace flag

struct SourceObject {
  double x = 0;
  double y = 0;
  double flux = 0;
  std::size_t npix = 0;
  double a = 0;
  double b = 0;
  double theta = 0;
  double cxx = 0;
  double cyy = 0;
  double cxy = 0;
  double peak = 0;
  std::uint32_t flag = 0;
};

struct ExtractParams {
  double thresh_sigma = 1.5;
  std::size_t min_area = 5;
  int connectivity = 8;
  std::optional<Mask> mask;

  void validate() const {
    if (!(thresh_sigma > 0)) throw Error(Errc::InvalidArgument, "thresh_sigma must be > 0");
    if (min_area < 1) throw Error(Errc::InvalidArgument, "min_area must be >= 1");
    if (connectivity != 4 && connectivity != 8) {
      throw Error(Errc::InvalidArgument, "connectivity must be 4 or 8");
    }
  }
};

inline constexpr double kMinAxis = 0.01;

namespace detail {

struct Pixel {
  std::uint32_t x, y;
};

template <typename Threshold>
std::vector<SourceObject> extract_impl(const Image& image, Threshold threshold,
                                       const ExtractParams& params) {
  params.validate();
  const Mask* mask = params.mask ? &*params.mask : nullptr;
  if (mask && !mask->same_shape(image)) {
    throw Error(Errc::DimensionMismatch, "mask and image differ in shape");
  }
  const std::size_t w = image.width(), h = image.height();
  auto masked = [&](std::size_t x, std::size_t y) { return mask && (*mask)(x, y); };

  // 0 = below threshold, 1 = detected and unvisited, 2 = visited
  Matrix<std::uint8_t> state(w, h, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = image(x, y);
      if (std::isfinite(v) && !masked(x, y) && v > threshold(x, y)) state(x, y) = 1;
    }
  }

  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int nbrs = params.connectivity;

  std::vector<SourceObject> objects;
  std::vector<Pixel> members, stack;
  for (std::size_t sy = 0; sy < h; ++sy) {
    for (std::size_t sx = 0; sx < w; ++sx) {
      if (state(sx, sy) != 1) continue;
      members.clear();
      stack.clear();
      stack.push_back({static_cast<std::uint32_t>(sx), static_cast<std::uint32_t>(sy)});
      state(sx, sy) = 2;
      bool touches_mask = false;
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        members.push_back(p);
        for (int k = 0; k < nbrs; ++k) {
          const auto nx = static_cast<std::ptrdiff_t>(p.x) + kDx[k];
          const auto ny = static_cast<std::ptrdiff_t>(p.y) + kDy[k];
          if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) ||
              ny >= static_cast<std::ptrdiff_t>(h)) {
            continue;
          }
          const auto ux = static_cast<std::size_t>(nx), uy = static_cast<std::size_t>(ny);
          if (masked(ux, uy)) touches_mask = true;
          if (state(ux, uy) == 1) {
            state(ux, uy) = 2;
            stack.push_back({static_cast<std::uint32_t>(ux), static_cast<std::uint32_t>(uy)});
          }
        }
      }
      if (members.size() < params.min_area) continue;

      // Moments are accumulated relative to the seed pixel so that an integer
      // shift of the image reproduces the same sums.
      SourceObject obj;
      obj.npix = members.size();
      double sum = 0, sx1 = 0, sy1 = 0;
      obj.peak = -std::numeric_limits<double>::infinity();
      for (const auto& p : members) {
        const double v = image(p.x, p.y);
        const double dx = static_cast<double>(p.x) - static_cast<double>(sx);
        const double dy = static_cast<double>(p.y) - static_cast<double>(sy);
        sum += v;
        sx1 += v * dx;
        sy1 += v * dy;
        obj.peak = std::max(obj.peak, v);
        if (p.x == 0 || p.y == 0 || p.x + 1 == w || p.y + 1 == h) obj.flag |= flag::kTruncated;
      }
      const double cx = sx1 / sum, cy = sy1 / sum;
      double mxx = 0, myy = 0, mxy = 0;
      for (const auto& p : members) {
        const double v = image(p.x, p.y);
        const double dx = static_cast<double>(p.x) - static_cast<double>(sx) - cx;
        const double dy = static_cast<double>(p.y) - static_cast<double>(sy) - cy;
        mxx += v * dx * dx;
        myy += v * dy * dy;
        mxy += v * dx * dy;
      }
      mxx /= sum;
      myy /= sum;
      mxy /= sum;

      obj.flux = sum;
      obj.x = static_cast<double>(sx) + cx;
      obj.y = static_cast<double>(sy) + cy;
      const double mean = 0.5 * (mxx + myy);
      const double spread = std::hypot(0.5 * (mxx - myy), mxy);
      obj.a = std::max(std::sqrt(std::max(mean + spread, 0.0)), kMinAxis);
      obj.b = std::max(std::sqrt(std::max(mean - spread, 0.0)), kMinAxis);
      double theta = 0.5 * std::atan2(2.0 * mxy, mxx - myy);
      if (theta <= -std::numbers::pi / 2) theta += std::numbers::pi;
      obj.theta = theta + 0.0;
      const auto k = ellipse_coeffs(obj.a, obj.b, obj.theta);
      obj.cxx = k.cxx;
      obj.cyy = k.cyy;
      obj.cxy = k.cxy;
      if (touches_mask) obj.flag |= flag::kMaskedOverlap;
      objects.push_back(obj);
    }
  }

  std::stable_sort(objects.begin(), objects.end(), [](const SourceObject& l, const SourceObject& r) {
    if (l.flux != r.flux) return l.flux > r.flux;
    if (l.y != r.y) return l.y < r.y;
    return l.x < r.x;
  });
  return objects;
}

}  // namespace detail

/// Detects connected groups of pixels above thresh_sigma * rms. No
/// deblending: each component is one object. Sorted by descending flux.
inline std::vector<SourceObject> extract(const Image& image, double rms,
                                         const ExtractParams& params = {}) {
  if (!(rms >= 0)) throw Error(Errc::InvalidArgument, "rms must be >= 0");
  const double t = params.thresh_sigma * rms;
  return detail::extract_impl(image, [t](std::size_t, std::size_t) { return t; }, params);
}

/// As above with the noise taken from the background model's rms mesh.
inline std::vector<SourceObject> extract(const Image& image, const BackgroundModel& bkg,
                                         const ExtractParams& params = {}) {
  if (image.width() != bkg.image_w || image.height() != bkg.image_h) {
    throw Error(Errc::DimensionMismatch, "image and background model differ in shape");
  }
  Image thresh = rmsarray(bkg);
  for (auto& v : thresh.values()) v *= params.thresh_sigma;
  return detail::extract_impl(
      image, [&thresh](std::size_t x, std::size_t y) { return thresh(x, y); }, params);
}

/// Ellipse batch built from the shapes of extracted objects.
inline EllipseBatch ellipses_of(const std::vector<SourceObject>& objects) {
  EllipseBatch batch;
  for (const auto& o : objects) batch.push_back(o.x, o.y, o.a, o.b, o.theta);
  return batch;
}

}  // namespace kira

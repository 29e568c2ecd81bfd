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
#include <numbers>
#include <span>
#include <vector>

#include "kira/error.hpp"
#include "kira/matrix.hpp"

namespace kira {

struct EllipseCoeffs {
  double cxx = 1;
  double cyy = 1;
  double cxy = 0;
};

struct EllipseAxes {
  double a = 1;
  double b = 1;
  double theta = 0;
};

/// Circular apertures, one entry per center.
struct CircleBatch {
  std::vector<double> x, y, r;

  std::size_t size() const noexcept { return x.size(); }
  void validate() const {
    if (y.size() != x.size() || r.size() != x.size()) {
      throw Error(Errc::InvalidArgument, "circle batch arrays differ in length");
    }
  }
};

/// Elliptical apertures; `a`, `b` are semi-axes in pixels, `theta` the
/// position angle of the major axis measured from +x towards +y.
struct EllipseBatch {
  std::vector<double> x, y, a, b, theta;

  std::size_t size() const noexcept { return x.size(); }
  void validate() const {
    const auto n = x.size();
    if (y.size() != n || a.size() != n || b.size() != n || theta.size() != n) {
      throw Error(Errc::InvalidArgument, "ellipse batch arrays differ in length");
    }
  }
  void push_back(double cx, double cy, double ca, double cb, double ct) {
    x.push_back(cx);
    y.push_back(cy);
    a.push_back(ca);
    b.push_back(cb);
    theta.push_back(ct);
  }
};

inline void check_axes(double a, double b) {
  if (!(b > 0) || !(a >= b) || !std::isfinite(a)) {
    throw Error(Errc::InvalidAxes, "need a >= b > 0 (a=" + std::to_string(a) +
                                       ", b=" + std::to_string(b) + ")");
  }
}

/// Quadratic-form coefficients of the unit ellipse:
/// cxx*x^2 + cyy*y^2 + cxy*x*y = 1 on the boundary.
inline EllipseCoeffs ellipse_coeffs(double a, double b, double theta) {
  check_axes(a, b);
  const double c = std::cos(theta), s = std::sin(theta);
  const double ia2 = 1.0 / (a * a), ib2 = 1.0 / (b * b);
  return {c * c * ia2 + s * s * ib2, s * s * ia2 + c * c * ib2, 2.0 * c * s * (ia2 - ib2)};
}

/// Inverse of ellipse_coeffs; theta in (-pi/2, pi/2], 0 for circles.
inline EllipseAxes ellipse_axes(double cxx, double cyy, double cxy) {
  if (!(cxx > 0) || !(cyy > 0) || !(4.0 * cxx * cyy - cxy * cxy > 0)) {
    throw Error(Errc::NotAnEllipse, "coefficients are not positive definite");
  }
  const double mean = 0.5 * (cxx + cyy);
  const double spread = std::hypot(0.5 * (cxx - cyy), 0.5 * cxy);
  const double lmax = mean + spread;
  const double lmin = (cxx * cyy - 0.25 * cxy * cxy) / lmax;
  EllipseAxes out{1.0 / std::sqrt(lmin), 1.0 / std::sqrt(lmax), 0.0};
  if (spread > 0) {
    double theta = 0.5 * std::atan2(-cxy, cyy - cxx);
    if (theta <= -std::numbers::pi / 2) theta += std::numbers::pi;
    out.theta = theta + 0.0;
  }
  return out;
}

struct CoeffArrays {
  std::vector<double> cxx, cyy, cxy;
};

struct AxesArrays {
  std::vector<double> a, b, theta;
};

inline CoeffArrays ellipse_coeffs(std::span<const double> a, std::span<const double> b,
                                  std::span<const double> theta) {
  if (b.size() != a.size() || theta.size() != a.size()) {
    throw Error(Errc::InvalidArgument, "ellipse arrays differ in length");
  }
  CoeffArrays out;
  out.cxx.reserve(a.size());
  out.cyy.reserve(a.size());
  out.cxy.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto c = ellipse_coeffs(a[i], b[i], theta[i]);
    out.cxx.push_back(c.cxx);
    out.cyy.push_back(c.cyy);
    out.cxy.push_back(c.cxy);
  }
  return out;
}

inline AxesArrays ellipse_axes(std::span<const double> cxx, std::span<const double> cyy,
                               std::span<const double> cxy) {
  if (cyy.size() != cxx.size() || cxy.size() != cxx.size()) {
    throw Error(Errc::InvalidArgument, "coefficient arrays differ in length");
  }
  AxesArrays out;
  out.a.reserve(cxx.size());
  out.b.reserve(cxx.size());
  out.theta.reserve(cxx.size());
  for (std::size_t i = 0; i < cxx.size(); ++i) {
    auto e = ellipse_axes(cxx[i], cyy[i], cxy[i]);
    out.a.push_back(e.a);
    out.b.push_back(e.b);
    out.theta.push_back(e.theta);
  }
  return out;
}

namespace detail {

/// Inclusive pixel range covered by an ellipse scaled by `scale`, clipped
/// to the image. Empty when the box misses the image entirely.
struct PixelBox {
  std::ptrdiff_t x0, x1, y0, y1;
  bool empty() const noexcept { return x0 > x1 || y0 > y1; }
};

inline PixelBox ellipse_box(double x, double y, double a, double b, double theta, double scale,
                            std::size_t width, std::size_t height, double margin = 0.0) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double hx = scale * std::sqrt(a * a * c * c + b * b * s * s) + margin;
  const double hy = scale * std::sqrt(a * a * s * s + b * b * c * c) + margin;
  auto lo = [](double v) { return static_cast<std::ptrdiff_t>(std::floor(v)); };
  auto hi = [](double v) { return static_cast<std::ptrdiff_t>(std::ceil(v)); };
  return {std::max<std::ptrdiff_t>(lo(x - hx), 0),
          std::min<std::ptrdiff_t>(hi(x + hx), static_cast<std::ptrdiff_t>(width) - 1),
          std::max<std::ptrdiff_t>(lo(y - hy), 0),
          std::min<std::ptrdiff_t>(hi(y + hy), static_cast<std::ptrdiff_t>(height) - 1)};
}

}  // namespace detail

/// Sets every mask pixel whose centre lies inside the ellipse scaled by
/// `r_scale`. Already-set pixels stay set.
inline Mask& mask_ellipse(Mask& mask, const EllipseBatch& batch, double r_scale) {
  batch.validate();
  const double limit = r_scale * r_scale;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto k = ellipse_coeffs(batch.a[i], batch.b[i], batch.theta[i]);
    const auto box = detail::ellipse_box(batch.x[i], batch.y[i], batch.a[i], batch.b[i],
                                         batch.theta[i], r_scale, mask.width(), mask.height());
    if (box.empty()) continue;
    for (auto py = box.y0; py <= box.y1; ++py) {
      const double dy = static_cast<double>(py) - batch.y[i];
      for (auto px = box.x0; px <= box.x1; ++px) {
        const double dx = static_cast<double>(px) - batch.x[i];
        if (k.cxx * dx * dx + k.cyy * dy * dy + k.cxy * dx * dy <= limit) {
          mask(static_cast<std::size_t>(px), static_cast<std::size_t>(py)) = 1;
        }
      }
    }
  }
  return mask;
}

}  // namespace kira

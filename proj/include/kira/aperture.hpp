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

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "kira/ellipse.hpp"
#include "kira/error.hpp"
#include "kira/extract.hpp"
#include "kira/matrix.hpp"

namespace kira {

struct PhotometryOptions {
  int subpix = 5;
  const Image* variance = nullptr;
  const Mask* mask = nullptr;
};

struct PhotometryResult {
  std::vector<double> flux;
  std::vector<double> fluxerr;
  std::vector<std::uint32_t> flag;
};

struct KronResult {
  std::vector<double> kron_r;
  std::vector<std::uint32_t> flag;
};

namespace detail {

inline constexpr double kHalfDiagonal = std::numbers::sqrt2 / 2.0;

enum class Cover { Outside, Boundary, Inside };

inline void check_photometry(const Image& image, const PhotometryOptions& opts) {
  if (opts.subpix < 1) throw Error(Errc::InvalidArgument, "subpix must be >= 1");
  if (opts.variance && !opts.variance->same_shape(image)) {
    throw Error(Errc::DimensionMismatch, "variance map and image differ in shape");
  }
  if (opts.mask && !opts.mask->same_shape(image)) {
    throw Error(Errc::DimensionMismatch, "mask and image differ in shape");
  }
}

// Fraction of an axis-aligned square of side `side` lying on the inner side
// of a straight line whose unit normal is (nx, ny) and which passes at
// signed distance `delta` from the square's centre (delta > 0: centre inside).
inline double square_coverage(double nx, double ny, double delta, double side) {
  double u = std::abs(nx) * side, v = std::abs(ny) * side;
  if (u < v) std::swap(u, v);
  const double t = delta + 0.5 * (u + v);
  if (t <= 0) return 0.0;
  if (t >= u + v) return 1.0;
  if (v <= 1e-12 * u) return t / u;
  if (t < v) return t * t / (2 * u * v);
  if (t < u) return (t - 0.5 * v) / u;
  const double r = u + v - t;
  return 1.0 - r * r / (2 * u * v);
}

// Sums pixel * covered fraction over `box`. Pixels that `classify` reports
// as fully inside count 1. Boundary pixels are split into subpix x subpix
// sub-pixels and each sub-pixel contributes the area inside the tangent line
// of the boundary nearest its centre; `edge` returns that line as
// (normal x, normal y, signed distance) for a sub-pixel centre offset.
template <typename Classify, typename Edge>
void sum_aperture(const Image& image, double cx, double cy, const PixelBox& box,
                  const PhotometryOptions& opts, Classify classify, Edge edge,
                  double& flux, double& var) {
  flux = 0;
  var = 0;
  if (box.empty()) return;
  const int n = opts.subpix;
  const double step = 1.0 / n;
  const double inv_samples = 1.0 / (static_cast<double>(n) * n);
  for (auto py = box.y0; py <= box.y1; ++py) {
    const double dy = static_cast<double>(py) - cy;
    for (auto px = box.x0; px <= box.x1; ++px) {
      const auto ux = static_cast<std::size_t>(px), uy = static_cast<std::size_t>(py);
      const double v = image(ux, uy);
      if (!std::isfinite(v) || (opts.mask && (*opts.mask)(ux, uy))) continue;
      const double dx = static_cast<double>(px) - cx;
      double frac = 0;
      switch (classify(dx, dy)) {
        case Cover::Outside: continue;
        case Cover::Inside: frac = 1.0; break;
        case Cover::Boundary: {
          double covered = 0;
          for (int j = 0; j < n; ++j) {
            const double sy = dy - 0.5 + (j + 0.5) * step;
            for (int i = 0; i < n; ++i) {
              const auto [nx, ny, delta] = edge(dx - 0.5 + (i + 0.5) * step, sy);
              covered += square_coverage(nx, ny, delta, step);
            }
          }
          frac = covered * inv_samples;
          break;
        }
      }
      flux += v * frac;
      if (opts.variance) var += (*opts.variance)(ux, uy) * frac;
    }
  }
}

struct EdgeLine {
  double nx, ny, delta;
};

inline bool off_image(double x, double y, double hx, double hy, const Image& image) {
  return x - hx < -0.5 || y - hy < -0.5 || x + hx > static_cast<double>(image.width()) - 0.5 ||
         y + hy > static_cast<double>(image.height()) - 0.5;
}

}  // namespace detail

/// Flux in circular apertures. Apertures reaching past the image edge sum
/// only in-image pixels and are flagged kTruncated.
inline PhotometryResult sum_circle(const Image& image, const CircleBatch& batch,
                                   const PhotometryOptions& opts = {}) {
  batch.validate();
  detail::check_photometry(image, opts);
  PhotometryResult out;
  out.flux.resize(batch.size());
  out.fluxerr.resize(batch.size());
  out.flag.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double x = batch.x[i], y = batch.y[i], r = batch.r[i];
    if (!(r >= 0)) throw Error(Errc::NegativeRadius, "aperture radius must be >= 0");
    if (r == 0) continue;
    const auto box = detail::ellipse_box(x, y, r, r, 0.0, 1.0, image.width(), image.height(), 1.0);
    auto classify = [r](double dx, double dy) {
      const double d = std::hypot(dx, dy);
      if (d + detail::kHalfDiagonal < r) return detail::Cover::Inside;
      if (d - detail::kHalfDiagonal >= r) return detail::Cover::Outside;
      return detail::Cover::Boundary;
    };
    auto edge = [r](double dx, double dy) {
      const double d = std::hypot(dx, dy);
      if (d == 0) return detail::EdgeLine{1.0, 0.0, r};
      return detail::EdgeLine{dx / d, dy / d, r - d};
    };
    double var = 0;
    detail::sum_aperture(image, x, y, box, opts, classify, edge, out.flux[i], var);
    out.fluxerr[i] = std::sqrt(var);
    if (detail::off_image(x, y, r, r, image)) out.flag[i] |= flag::kTruncated;
  }
  return out;
}

/// Flux in elliptical apertures: cxx*dx^2 + cyy*dy^2 + cxy*dx*dy <= r_scale^2.
inline PhotometryResult sum_ellipse(const Image& image, const EllipseBatch& batch, double r_scale,
                                    const PhotometryOptions& opts = {}) {
  batch.validate();
  detail::check_photometry(image, opts);
  if (!(r_scale >= 0)) throw Error(Errc::NegativeRadius, "r_scale must be >= 0");
  PhotometryResult out;
  out.flux.resize(batch.size());
  out.fluxerr.resize(batch.size());
  out.flag.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double x = batch.x[i], y = batch.y[i], a = batch.a[i], b = batch.b[i],
                 th = batch.theta[i];
    const auto k = ellipse_coeffs(a, b, th);
    if (r_scale == 0) continue;
    // sqrt(Q) changes by at most |d|/b over a displacement d.
    const double slack = detail::kHalfDiagonal / b;
    auto classify = [&k, r_scale, slack](double dx, double dy) {
      const double re = std::sqrt(k.cxx * dx * dx + k.cyy * dy * dy + k.cxy * dx * dy);
      if (re + slack < r_scale) return detail::Cover::Inside;
      if (re - slack >= r_scale) return detail::Cover::Outside;
      return detail::Cover::Boundary;
    };
    // Signed distance to the scaled boundary, to first order:
    // (r_scale - rho) / |grad rho| with rho = sqrt(Q).
    auto edge = [&k, r_scale, a](double dx, double dy) {
      const double q = k.cxx * dx * dx + k.cyy * dy * dy + k.cxy * dx * dy;
      const double rho = std::sqrt(q);
      if (rho == 0) return detail::EdgeLine{1.0, 0.0, r_scale * a};
      const double gx = (2 * k.cxx * dx + k.cxy * dy) / (2 * rho);
      const double gy = (2 * k.cyy * dy + k.cxy * dx) / (2 * rho);
      const double g = std::hypot(gx, gy);
      return detail::EdgeLine{gx / g, gy / g, (r_scale - rho) / g};
    };
    const auto box =
        detail::ellipse_box(x, y, a, b, th, r_scale, image.width(), image.height(), 1.0);
    double var = 0;
    detail::sum_aperture(image, x, y, box, opts, classify, edge, out.flux[i], var);
    out.fluxerr[i] = std::sqrt(var);
    const double c = std::cos(th), s = std::sin(th);
    const double hx = r_scale * std::sqrt(a * a * c * c + b * b * s * s);
    const double hy = r_scale * std::sqrt(a * a * s * s + b * b * c * c);
    if (detail::off_image(x, y, hx, hy, image)) out.flag[i] |= flag::kTruncated;
  }
  return out;
}

/// Flux-weighted mean elliptical radius, sum(|v| * r_e) / sum(|v|), over
/// pixel centres with r_e <= r_max. Radii are in units of the ellipse axes.
inline KronResult kron_radius(const Image& image, const EllipseBatch& batch, double r_max = 6.0,
                              const Mask* mask = nullptr) {
  batch.validate();
  if (!(r_max > 0)) throw Error(Errc::InvalidArgument, "r_max must be > 0");
  if (mask && !mask->same_shape(image)) {
    throw Error(Errc::DimensionMismatch, "mask and image differ in shape");
  }
  KronResult out;
  out.kron_r.resize(batch.size());
  out.flag.resize(batch.size());
  const double limit = r_max * r_max;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double x = batch.x[i], y = batch.y[i], a = batch.a[i], b = batch.b[i],
                 th = batch.theta[i];
    const auto k = ellipse_coeffs(a, b, th);
    const auto box = detail::ellipse_box(x, y, a, b, th, r_max, image.width(), image.height());
    double num = 0, den = 0;
    if (!box.empty()) {
      for (auto py = box.y0; py <= box.y1; ++py) {
        const double dy = static_cast<double>(py) - y;
        for (auto px = box.x0; px <= box.x1; ++px) {
          const auto ux = static_cast<std::size_t>(px), uy = static_cast<std::size_t>(py);
          const double v = image(ux, uy);
          if (!std::isfinite(v) || (mask && (*mask)(ux, uy))) continue;
          const double dx = static_cast<double>(px) - x;
          const double q = k.cxx * dx * dx + k.cyy * dy * dy + k.cxy * dx * dy;
          if (q > limit) continue;
          num += std::abs(v) * std::sqrt(q);
          den += std::abs(v);
        }
      }
    }
    if (den > 0) {
      out.kron_r[i] = num / den;
    } else {
      out.flag[i] |= flag::kNoFlux;
    }
    const double c = std::cos(th), s = std::sin(th);
    const double hx = r_max * std::sqrt(a * a * c * c + b * b * s * s);
    const double hy = r_max * std::sqrt(a * a * s * s + b * b * c * c);
    if (detail::off_image(x, y, hx, hy, image)) out.flag[i] |= flag::kTruncated;
  }
  return out;
}

}  // namespace kira

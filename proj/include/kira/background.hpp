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
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "kira/error.hpp"
#include "kira/matrix.hpp"

namespace kira {

struct BackgroundOptions {
  std::size_t cell_size = 64;
  double clip_sigma = 3.0;
  int clip_iters = 5;
};

/// Coarse background mesh. Cell (i, j) covers pixel columns
/// [i*cell_size, min((i+1)*cell_size, image_w)) and likewise for rows; the
/// last row/column of cells may be partial.
struct BackgroundModel {
  std::size_t image_w = 0;
  std::size_t image_h = 0;
  std::size_t cell_size = 0;
  std::size_t mesh_w = 0;
  std::size_t mesh_h = 0;
  Matrix<double> levels;  // mesh_w x mesh_h
  Matrix<double> rms;     // mesh_w x mesh_h

  static std::size_t cells_for(std::size_t pixels, std::size_t cell) {
    return (pixels + cell - 1) / cell;
  }

  /// Builds a model from explicit per-cell values; checks the mesh shape.
  static BackgroundModel from_mesh(std::size_t image_w, std::size_t image_h,
                                   std::size_t cell_size, Matrix<double> levels,
                                   Matrix<double> rms) {
    if (image_w < 1 || image_h < 1 || cell_size < 1) {
      throw Error(Errc::InvalidArgument, "background model needs a non-empty image and cell");
    }
    BackgroundModel m{image_w, image_h, cell_size, cells_for(image_w, cell_size),
                      cells_for(image_h, cell_size), std::move(levels), std::move(rms)};
    if (m.levels.width() != m.mesh_w || m.levels.height() != m.mesh_h || !m.rms.same_shape(m.levels)) {
      throw Error(Errc::DimensionMismatch, "mesh does not match ceil(image/cell_size)");
    }
    for (double r : m.rms.values()) {
      if (!(r >= 0)) throw Error(Errc::InvalidArgument, "background rms must be >= 0");
    }
    return m;
  }

  /// Pixel coordinate at which a cell's value is anchored: first pixel of
  /// the cell plus half its (possibly partial) length, rounded down.
  static double anchor(std::size_t cell, std::size_t cell_size, std::size_t pixels) {
    const std::size_t start = cell * cell_size;
    const std::size_t len = std::min(cell_size, pixels - start);
    return static_cast<double>(start + len / 2);
  }
};

namespace detail {

struct AxisWeights {
  std::vector<std::size_t> lo, hi;
  std::vector<double> t;
};

// Linear interpolation weights along one axis between cell anchors;
// positions outside the first/last anchor clamp to that cell.
inline AxisWeights axis_weights(std::size_t pixels, std::size_t cells, std::size_t cell_size) {
  AxisWeights w;
  w.lo.resize(pixels);
  w.hi.resize(pixels);
  w.t.resize(pixels);
  std::size_t j = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double pos = static_cast<double>(p);
    while (j + 1 < cells && BackgroundModel::anchor(j + 1, cell_size, pixels) <= pos) ++j;
    const double a0 = BackgroundModel::anchor(j, cell_size, pixels);
    if (j + 1 >= cells || pos <= a0) {
      w.lo[p] = w.hi[p] = j;
      w.t[p] = 0.0;
      continue;
    }
    const double a1 = BackgroundModel::anchor(j + 1, cell_size, pixels);
    w.lo[p] = j;
    w.hi[p] = j + 1;
    w.t[p] = (pos - a0) / (a1 - a0);
  }
  return w;
}

inline Image interpolate_mesh(const BackgroundModel& m, const Matrix<double>& mesh) {
  const auto wx = axis_weights(m.image_w, m.mesh_w, m.cell_size);
  const auto wy = axis_weights(m.image_h, m.mesh_h, m.cell_size);
  Image out(m.image_w, m.image_h);
  for (std::size_t y = 0; y < m.image_h; ++y) {
    const double ty = wy.t[y];
    for (std::size_t x = 0; x < m.image_w; ++x) {
      const double tx = wx.t[x];
      const double top = (1 - tx) * mesh(wx.lo[x], wy.lo[y]) + tx * mesh(wx.hi[x], wy.lo[y]);
      const double bot = (1 - tx) * mesh(wx.lo[x], wy.hi[y]) + tx * mesh(wx.hi[x], wy.hi[y]);
      out(x, y) = ty == 0.0 ? top : (1 - ty) * top + ty * bot;
    }
  }
  return out;
}

inline double median_of(std::vector<double> v) {
  const auto n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

struct CellStats {
  double level = 0;
  double rms = 0;
};

/// Iterative clipping about the mean. The level is the mean unless clipping
/// discarded more than 20% of the samples, in which case the crowded-field
/// mode estimate 2.5*median - 1.5*mean is used.
inline CellStats clipped_stats(std::vector<double> values, double clip_sigma, int clip_iters) {
  const std::size_t total = values.size();
  auto moments = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(ss / static_cast<double>(v.size()))};
  };
  auto [mean, sd] = moments(values);
  for (int it = 0; it < clip_iters && sd > 0; ++it) {
    const double lim = clip_sigma * sd;
    std::vector<double> kept;
    kept.reserve(values.size());
    for (double x : values) {
      if (std::abs(x - mean) <= lim) kept.push_back(x);
    }
    if (kept.size() == values.size() || kept.empty()) break;
    values = std::move(kept);
    std::tie(mean, sd) = moments(values);
  }
  CellStats out;
  out.rms = sd;
  const bool crowded = static_cast<double>(total - values.size()) > 0.2 * static_cast<double>(total);
  out.level = crowded ? 2.5 * median_of(values) - 1.5 * mean : mean;
  return out;
}

inline Matrix<double> median_filter3(const Matrix<double>& in) {
  const auto w = static_cast<std::ptrdiff_t>(in.width());
  const auto h = static_cast<std::ptrdiff_t>(in.height());
  Matrix<double> out(in.width(), in.height());
  std::vector<double> window;
  window.reserve(9);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      window.clear();
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const auto cx = std::clamp<std::ptrdiff_t>(x + dx, 0, w - 1);
          const auto cy = std::clamp<std::ptrdiff_t>(y + dy, 0, h - 1);
          window.push_back(in(static_cast<std::size_t>(cx), static_cast<std::size_t>(cy)));
        }
      }
      out(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = median_of(window);
    }
  }
  return out;
}

}  // namespace detail

/// Estimates the sky on a mesh of square cells. Masked and non-finite pixels
/// are ignored. A cell with no usable pixels takes the median of its
/// non-empty neighbours (or of all non-empty cells when it has none).
/// Images smaller than one cell yield a single-cell model.
inline BackgroundModel makeback(const Image& image, const Mask* mask,
                                const BackgroundOptions& opts = {}) {
  if (opts.cell_size < 8) throw Error(Errc::InvalidArgument, "cell_size must be >= 8");
  if (opts.clip_iters < 0) throw Error(Errc::InvalidArgument, "clip_iters must be >= 0");
  if (!(opts.clip_sigma > 0)) throw Error(Errc::InvalidArgument, "clip_sigma must be > 0");
  if (image.empty()) throw Error(Errc::InvalidArgument, "empty image");
  if (mask && !mask->same_shape(image)) {
    throw Error(Errc::DimensionMismatch, "mask and image differ in shape");
  }
  const std::size_t cs = opts.cell_size;
  const std::size_t mw = BackgroundModel::cells_for(image.width(), cs);
  const std::size_t mh = BackgroundModel::cells_for(image.height(), cs);
  Matrix<double> levels(mw, mh), rms(mw, mh);
  Matrix<std::uint8_t> filled(mw, mh, 0);

  std::vector<double> values;
  for (std::size_t j = 0; j < mh; ++j) {
    for (std::size_t i = 0; i < mw; ++i) {
      values.clear();
      const std::size_t x1 = std::min((i + 1) * cs, image.width());
      const std::size_t y1 = std::min((j + 1) * cs, image.height());
      for (std::size_t y = j * cs; y < y1; ++y) {
        for (std::size_t x = i * cs; x < x1; ++x) {
          const double v = image(x, y);
          if (std::isfinite(v) && !(mask && (*mask)(x, y))) values.push_back(v);
        }
      }
      if (values.empty()) continue;
      const auto st = detail::clipped_stats(std::move(values), opts.clip_sigma, opts.clip_iters);
      values = {};
      levels(i, j) = st.level;
      rms(i, j) = st.rms;
      filled(i, j) = 1;
    }
  }

  // Empty cells.
  std::vector<double> all_l, all_r;
  for (std::size_t k = 0; k < filled.size(); ++k) {
    if (filled.values()[k]) {
      all_l.push_back(levels.values()[k]);
      all_r.push_back(rms.values()[k]);
    }
  }
  const Matrix<std::uint8_t> had = filled;
  for (std::size_t j = 0; j < mh; ++j) {
    for (std::size_t i = 0; i < mw; ++i) {
      if (had(i, j)) continue;
      std::vector<double> nl, nr;
      for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
        for (std::ptrdiff_t di = -1; di <= 1; ++di) {
          const auto ni = static_cast<std::ptrdiff_t>(i) + di;
          const auto nj = static_cast<std::ptrdiff_t>(j) + dj;
          if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(mw) ||
              nj >= static_cast<std::ptrdiff_t>(mh)) {
            continue;
          }
          const auto ui = static_cast<std::size_t>(ni), uj = static_cast<std::size_t>(nj);
          if (had(ui, uj)) {
            nl.push_back(levels(ui, uj));
            nr.push_back(rms(ui, uj));
          }
        }
      }
      if (nl.empty()) {
        nl = all_l;
        nr = all_r;
      }
      levels(i, j) = nl.empty() ? 0.0 : detail::median_of(nl);
      rms(i, j) = nr.empty() ? 0.0 : detail::median_of(nr);
    }
  }

  if (mw * mh > 1) {
    levels = detail::median_filter3(levels);
    rms = detail::median_filter3(rms);
  }
  return BackgroundModel{image.width(), image.height(), cs, mw, mh, std::move(levels),
                         std::move(rms)};
}

inline BackgroundModel makeback(const Image& image, const BackgroundOptions& opts = {}) {
  return makeback(image, nullptr, opts);
}

inline BackgroundModel makeback(const Image& image, const Mask& mask,
                                const BackgroundOptions& opts = {}) {
  return makeback(image, &mask, opts);
}

/// Full-resolution background by bilinear interpolation between cell anchors.
inline Image backarray(const BackgroundModel& bkg) {
  return detail::interpolate_mesh(bkg, bkg.levels);
}

/// Full-resolution noise map, interpolated like backarray.
inline Image rmsarray(const BackgroundModel& bkg) {
  return detail::interpolate_mesh(bkg, bkg.rms);
}

inline Image subbackarray(const Image& image, const BackgroundModel& bkg) {
  if (image.width() != bkg.image_w || image.height() != bkg.image_h) {
    throw Error(Errc::DimensionMismatch, "image and background model differ in shape");
  }
  Image out = backarray(bkg);
  auto src = image.values();
  auto dst = out.values();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = src[k] - dst[k];
  return out;
}

}  // namespace kira

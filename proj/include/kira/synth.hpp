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
#include <optional>
#include <random>
#include <span>

#include "kira/fits.hpp"

namespace kira::fits {

struct GaussianSource {
  double x = 0;
  double y = 0;
  double amplitude = 0;
  double sigma = 1;
};

struct NoiseSpec {
  double sigma = 0;
  std::uint64_t seed = 0;
};

/// Synthetic sky: constant background plus circular Gaussian blobs evaluated
/// at pixel centres, plus optional seeded white noise. Pixel values are
/// rounded to single precision so the F32 encoding reproduces them exactly.
inline ImageHDU synth_image(std::size_t width, std::size_t height, double background,
                            std::span<const GaussianSource> sources,
                            std::optional<NoiseSpec> noise = std::nullopt) {
  if (width < 1 || height < 1) throw Error(Errc::InvalidArgument, "image must be at least 1x1");
  for (const auto& s : sources) {
    if (!(s.sigma > 0)) throw Error(Errc::InvalidArgument, "source sigma must be > 0");
  }
  Image img(width, height, background);
  for (const auto& s : sources) {
    // Truncated at 10 sigma; the omitted tail is below exp(-50) of the peak.
    const double reach = 10.0 * s.sigma;
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(s.x - reach));
    const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(s.x + reach));
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(s.y - reach));
    const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(s.y + reach));
    const double inv2s2 = 1.0 / (2.0 * s.sigma * s.sigma);
    for (auto y = std::max<std::ptrdiff_t>(y0, 0);
         y <= std::min<std::ptrdiff_t>(y1, static_cast<std::ptrdiff_t>(height) - 1); ++y) {
      for (auto x = std::max<std::ptrdiff_t>(x0, 0);
           x <= std::min<std::ptrdiff_t>(x1, static_cast<std::ptrdiff_t>(width) - 1); ++x) {
        const double dx = static_cast<double>(x) - s.x, dy = static_cast<double>(y) - s.y;
        img(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) +=
            s.amplitude * std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  }
  if (noise && noise->sigma > 0) {
    std::mt19937_64 rng(noise->seed);
    std::normal_distribution<double> dist(0.0, noise->sigma);
    for (auto& v : img.values()) v += dist(rng);
  }
  for (auto& v : img.values()) v = static_cast<double>(static_cast<float>(v));
  return make_hdu(std::move(img), Bitpix::F32);
}

}  // namespace kira::fits

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

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kira/background.hpp"
#include "kira/dataflow.hpp"
#include "kira/ellipse.hpp"
#include "kira/extract.hpp"
#include "kira/fits.hpp"

namespace kira {

struct PipelineParams {
  ExtractParams extract;  // its mask is ignored; the pipeline builds its own
  BackgroundOptions background;
  int iterations = 1;
  double mask_scale = 3.0;

  void validate() const {
    extract.validate();
    if (iterations < 1) throw Error(Errc::InvalidArgument, "iterations must be >= 1");
    if (!(mask_scale > 0)) throw Error(Errc::InvalidArgument, "mask_scale must be > 0");
  }
};

/// What one refinement pass saw and found.
struct PassTrace {
  Mask mask;  // mask in force during the pass
  std::vector<SourceObject> objects;
};

/// Background, subtract, extract; then mask the detections and repeat with
/// the mask applied to both the background and the extraction. The catalog
/// is every pass's new detections in pass order. Stops early when a pass
/// finds nothing.
inline std::vector<SourceObject> extract_iterative(const Image& image, const PipelineParams& params,
                                                   std::vector<PassTrace>* trace = nullptr) {
  params.validate();
  Mask mask(image.width(), image.height(), 0);
  std::vector<SourceObject> catalog;
  for (int pass = 0; pass < params.iterations; ++pass) {
    const bool masked = pass > 0;
    const auto bkg = makeback(image, masked ? &mask : nullptr, params.background);
    const Image sub = subbackarray(image, bkg);
    ExtractParams ep = params.extract;
    ep.mask.reset();
    if (masked) ep.mask = mask;
    auto found = extract(sub, bkg, ep);
    if (trace) trace->push_back({mask, found});
    if (found.empty()) break;
    mask_ellipse(mask, ellipses_of(found), params.mask_scale);
    catalog.insert(catalog.end(), found.begin(), found.end());
  }
  return catalog;
}

struct LoadedImage {
  std::string path;
  std::optional<Image> image;
  std::string error;
};

struct FileCatalog {
  std::string path;
  std::vector<SourceObject> objects;
  std::string error;  // non-empty when the file could not be parsed

  bool ok() const { return error.empty(); }
};

inline LoadedImage load_image(const FileBlob& blob) {
  LoadedImage out{blob.path, std::nullopt, {}};
  try {
    out.image = fits::parse_fits(blob.bytes).pixels;
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

inline FileCatalog catalog_image(const LoadedImage& m, const PipelineParams& params) {
  if (!m.image) return {m.path, {}, m.error};
  return {m.path, extract_iterative(*m.image, params), {}};
}

/// binary_files -> map(load) -> map(extract) -> collect, in path order.
/// Parse failures come back as entries with `error` set rather than failing
/// the job.
inline std::vector<FileCatalog> run_pipeline(Context& ctx, std::shared_ptr<const BlockMap> store,
                                             const PipelineParams& params) {
  params.validate();
  return ctx.binary_files(std::move(store))
      .map(load_image)
      .map([params](const LoadedImage& m) { return catalog_image(m, params); })
      .collect();
}

}  // namespace kira

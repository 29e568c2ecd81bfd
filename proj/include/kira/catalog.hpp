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

#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "kira/pipeline.hpp"

namespace kira {

inline constexpr std::string_view kCatalogHeader =
    "file,object,x,y,flux,npix,a,b,theta,cxx,cyy,cxy,peak,flag";

/// printf("%.6g"), with negative zero written as 0.
inline std::string format_g6(double v) {
  if (v == 0) v = 0;  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// CSV catalog: header row, one row per object, files in the given order
/// (path order from the pipeline), LF line endings.
inline std::string catalog_csv(const std::vector<FileCatalog>& files) {
  std::string out(kCatalogHeader);
  out += '\n';
  for (const auto& f : files) {
    const auto file = csv_field(f.path);
    for (std::size_t i = 0; i < f.objects.size(); ++i) {
      const auto& o = f.objects[i];
      out += file;
      out += ',' + std::to_string(i);
      for (double v : {o.x, o.y, o.flux}) out += ',' + format_g6(v);
      out += ',' + std::to_string(o.npix);
      for (double v : {o.a, o.b, o.theta, o.cxx, o.cyy, o.cxy, o.peak}) out += ',' + format_g6(v);
      out += ',' + std::to_string(o.flag);
      out += '\n';
    }
  }
  return out;
}

}  // namespace kira

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

#include <stdexcept>
#include <string>
#include <string_view>

namespace kira {

enum class Errc {
  // fits
  MalformedHeader,
  UnsupportedBitpix,
  TruncatedData,
  DimensionOverflow,
  // extraction
  InvalidArgument,
  DimensionMismatch,
  NegativeRadius,
  InvalidAxes,
  NotAnEllipse,
  // dataflow
  ZeroPartitions,
  EmptyCollection,
  JobFailed,
  // storage
  NoSuchDirectory,
  UnknownPath,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::UnsupportedBitpix: return "UnsupportedBitpix";
    case Errc::TruncatedData: return "TruncatedData";
    case Errc::DimensionOverflow: return "DimensionOverflow";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NegativeRadius: return "NegativeRadius";
    case Errc::InvalidAxes: return "InvalidAxes";
    case Errc::NotAnEllipse: return "NotAnEllipse";
    case Errc::ZeroPartitions: return "ZeroPartitions";
    case Errc::EmptyCollection: return "EmptyCollection";
    case Errc::JobFailed: return "JobFailed";
    case Errc::NoSuchDirectory: return "NoSuchDirectory";
    case Errc::UnknownPath: return "UnknownPath";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` tells callers what went wrong.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace kira

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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kira/error.hpp"

namespace kira {

/// Dense row-major 2-D array indexed as (x, y), x being the column.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}
  Matrix(std::size_t width, std::size_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) {
      throw Error(Errc::DimensionMismatch, "matrix data does not match width*height");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }

  std::span<T> row(std::size_t y) { return {data_.data() + y * width_, width_}; }
  std::span<const T> row(std::size_t y) const { return {data_.data() + y * width_, width_}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool same_shape(const Matrix<T>& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_;
  }
  template <typename U>
  bool same_shape(const Matrix<U>& o) const noexcept {
    return width_ == o.width() && height_ == o.height();
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

using Image = Matrix<double>;
// uint8_t rather than bool: std::vector<bool> has no contiguous storage.
using Mask = Matrix<std::uint8_t>;

}  // namespace kira

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

#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace kira {

// Stable 64-bit FNV-1a. Shuffle partitioning depends on it, so it must not
// change between builds or platforms (std::hash gives no such promise).
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline constexpr std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                                     std::uint64_t h = kFnvOffset) noexcept {
  for (auto b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

inline constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) noexcept {
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

/// Key hashing for shuffles. Integers hash their little-endian bytes, strings
/// their characters, pairs chain the two halves.
template <typename T>
struct StableHash;

template <std::integral T>
struct StableHash<T> {
  constexpr std::uint64_t operator()(T v, std::uint64_t h = kFnvOffset) const noexcept {
    auto u = static_cast<std::make_unsigned_t<T>>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      h ^= static_cast<std::uint8_t>(u & 0xffu);
      h *= kFnvPrime;
      if constexpr (sizeof(T) > 1) u >>= 8;
    }
    return h;
  }
};

template <>
struct StableHash<std::string> {
  std::uint64_t operator()(const std::string& s, std::uint64_t h = kFnvOffset) const noexcept {
    return fnv1a(std::string_view(s), h);
  }
};

template <>
struct StableHash<std::string_view> {
  constexpr std::uint64_t operator()(std::string_view s, std::uint64_t h = kFnvOffset) const noexcept {
    return fnv1a(s, h);
  }
};

template <typename A, typename B>
struct StableHash<std::pair<A, B>> {
  constexpr std::uint64_t operator()(const std::pair<A, B>& p,
                                     std::uint64_t h = kFnvOffset) const noexcept {
    return StableHash<B>{}(p.second, StableHash<A>{}(p.first, h));
  }
};

template <typename T>
std::uint64_t stable_hash(const T& v) noexcept {
  return StableHash<T>{}(v);
}

}  // namespace kira

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
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kira/error.hpp"
#include "kira/matrix.hpp"

namespace kira::fits {

inline constexpr std::size_t kBlockSize = 2880;
inline constexpr std::size_t kCardSize = 80;

using Bytes = std::vector<std::uint8_t>;

enum class Bitpix : int { I8 = 8, I16 = 16, I32 = 32, F32 = -32, F64 = -64 };

constexpr std::size_t bytes_per_pixel(Bitpix b) noexcept {
  return static_cast<std::size_t>(std::abs(static_cast<int>(b))) / 8;
}

constexpr bool is_integer(Bitpix b) noexcept { return static_cast<int>(b) > 0; }

inline std::optional<Bitpix> bitpix_from_int(std::int64_t v) {
  switch (v) {
    case 8: return Bitpix::I8;
    case 16: return Bitpix::I16;
    case 32: return Bitpix::I32;
    case -32: return Bitpix::F32;
    case -64: return Bitpix::F64;
    default: return std::nullopt;
  }
}

using CardValue = std::variant<std::monostate, std::int64_t, double, bool, std::string>;

namespace detail {

inline std::string_view rtrim(std::string_view s) {
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}

inline std::string_view ltrim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

inline bool valid_keyword(std::string_view kw) {
  if (kw.size() > 8) return false;
  return std::all_of(kw.begin(), kw.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
  });
}

inline bool is_commentary(std::string_view kw) {
  return kw.empty() || kw == "COMMENT" || kw == "HISTORY";
}

inline std::string format_real(double v) {
  if (!std::isfinite(v)) {
    throw Error(Errc::MalformedHeader, "non-finite real values cannot be stored in a header");
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  for (auto& c : s) {
    if (c == 'e') c = 'E';
  }
  if (s.find('.') == std::string::npos) {
    auto e = s.find('E');
    if (e == std::string::npos) {
      s += ".0";
    } else {
      s.insert(e, ".0");
    }
  }
  return s;
}

}  // namespace detail

/// One 80-byte header record. COMMENT, HISTORY and blank-keyword cards carry
/// their text in `comment` and have no value.
struct HeaderCard {
  std::string keyword;
  CardValue value;
  std::optional<std::string> comment;

  bool is_commentary() const { return detail::is_commentary(keyword); }

  std::optional<std::int64_t> as_int() const {
    if (auto p = std::get_if<std::int64_t>(&value)) return *p;
    return std::nullopt;
  }
  std::optional<double> as_real() const {
    if (auto p = std::get_if<double>(&value)) return *p;
    if (auto p = std::get_if<std::int64_t>(&value)) return static_cast<double>(*p);
    return std::nullopt;
  }

  friend bool operator==(const HeaderCard&, const HeaderCard&) = default;

  /// Fixed-format serialization: values right-justified to column 30,
  /// strings quoted from column 11, comments after " / ".
  std::string format() const {
    if (!detail::valid_keyword(keyword)) {
      throw Error(Errc::MalformedHeader, "invalid keyword '" + keyword + "'");
    }
    std::string out = keyword;
    out.resize(8, ' ');
    if (is_commentary()) {
      if (!std::holds_alternative<std::monostate>(value)) {
        throw Error(Errc::MalformedHeader, "commentary card '" + keyword + "' cannot hold a value");
      }
      out += comment.value_or("");
    } else {
      out += "= ";
      std::string field = std::visit(
          [](const auto& v) -> std::string {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, std::monostate>) {
              return std::string(20, ' ');
            } else if constexpr (std::is_same_v<V, bool>) {
              return std::string(19, ' ') + (v ? "T" : "F");
            } else if constexpr (std::is_same_v<V, std::int64_t>) {
              auto s = std::to_string(v);
              return std::string(s.size() < 20 ? 20 - s.size() : 0, ' ') + s;
            } else if constexpr (std::is_same_v<V, double>) {
              auto s = detail::format_real(v);
              return std::string(s.size() < 20 ? 20 - s.size() : 0, ' ') + s;
            } else {
              std::string s = "'";
              for (char c : v) {
                if (c < 0x20 || c > 0x7e) {
                  throw Error(Errc::MalformedHeader, "non-printable character in string value");
                }
                s += c;
                if (c == '\'') s += '\'';
              }
              // Fixed format pads the quoted text to at least 8 characters.
              if (s.size() < 9) s.resize(9, ' ');
              s += '\'';
              if (s.size() < 20) s.resize(20, ' ');
              return s;
            }
          },
          value);
      out += field;
      if (out.size() > kCardSize) {
        throw Error(Errc::MalformedHeader, "value of '" + keyword + "' does not fit in one card");
      }
      if (comment) out += " / " + *comment;
    }
    if (out.size() > kCardSize) out.resize(kCardSize);
    out.resize(kCardSize, ' ');
    return out;
  }

  static HeaderCard parse(std::string_view record) {
    if (record.size() != kCardSize) {
      throw Error(Errc::MalformedHeader, "header record is not 80 bytes");
    }
    for (char c : record) {
      if (c < 0x20 || c > 0x7e) {
        throw Error(Errc::MalformedHeader, "non-ASCII byte in header record");
      }
    }
    HeaderCard card;
    card.keyword = std::string(detail::rtrim(record.substr(0, 8)));
    if (!detail::valid_keyword(card.keyword)) {
      throw Error(Errc::MalformedHeader, "invalid keyword '" + card.keyword + "'");
    }
    if (card.is_commentary() || record.substr(8, 2) != "= ") {
      auto text = detail::rtrim(record.substr(8));
      if (!text.empty() || !card.is_commentary()) card.comment = std::string(text);
      if (card.keyword == "END" && text.empty()) card.comment.reset();
      return card;
    }

    std::string_view rest = detail::ltrim(record.substr(10));
    auto take_comment = [&](std::string_view tail) {
      tail = detail::ltrim(tail);
      if (tail.empty()) return;
      if (tail.front() != '/') {
        throw Error(Errc::MalformedHeader, "unexpected text after value of '" + card.keyword + "'");
      }
      tail.remove_prefix(1);
      if (!tail.empty() && tail.front() == ' ') tail.remove_prefix(1);
      card.comment = std::string(detail::rtrim(tail));
    };

    if (rest.empty() || rest.front() == '/') {
      take_comment(rest);
      return card;
    }
    if (rest.front() == '\'') {
      std::string s;
      std::size_t i = 1;
      bool closed = false;
      while (i < rest.size()) {
        if (rest[i] == '\'') {
          if (i + 1 < rest.size() && rest[i + 1] == '\'') {
            s += '\'';
            i += 2;
            continue;
          }
          closed = true;
          ++i;
          break;
        }
        s += rest[i++];
      }
      if (!closed) {
        throw Error(Errc::MalformedHeader, "unterminated string in '" + card.keyword + "'");
      }
      card.value = std::string(detail::rtrim(s));
      take_comment(rest.substr(i));
      return card;
    }

    auto slash = rest.find('/');
    std::string_view token = detail::rtrim(rest.substr(0, slash));
    if (slash != std::string_view::npos) take_comment(rest.substr(slash));

    if (token == "T" || token == "F") {
      card.value = (token == "T");
      return card;
    }
    bool integral = !token.empty() &&
                    std::all_of(token.begin() + ((token[0] == '+' || token[0] == '-') ? 1 : 0),
                                token.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
                    token.find_first_of("0123456789") != std::string_view::npos;
    if (integral) {
      std::string_view digits = token.front() == '+' ? token.substr(1) : token;
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec == std::errc() && ptr == digits.data() + digits.size()) {
        card.value = v;
        return card;
      }
    }
    std::string real(token.front() == '+' ? token.substr(1) : token);
    std::replace(real.begin(), real.end(), 'D', 'E');
    double v = 0;
    auto [ptr, ec] = std::from_chars(real.data(), real.data() + real.size(), v);
    if (ec != std::errc() || ptr != real.data() + real.size()) {
      throw Error(Errc::MalformedHeader,
                  "cannot parse value '" + std::string(token) + "' of '" + card.keyword + "'");
    }
    card.value = v;
    return card;
  }
};

/// Primary image HDU. Pixels are stored in physical units
/// (BZERO + BSCALE * stored); BLANK pixels become NaN.
struct ImageHDU {
  std::vector<HeaderCard> cards;
  Bitpix bitpix = Bitpix::F32;
  Image pixels;

  std::size_t width() const noexcept { return pixels.width(); }
  std::size_t height() const noexcept { return pixels.height(); }

  const HeaderCard* find(std::string_view keyword) const {
    auto it = std::find_if(cards.begin(), cards.end(),
                           [&](const HeaderCard& c) { return c.keyword == keyword; });
    return it == cards.end() ? nullptr : &*it;
  }

  double bscale() const {
    auto c = find("BSCALE");
    return c && c->as_real() ? *c->as_real() : 1.0;
  }
  double bzero() const {
    auto c = find("BZERO");
    return c && c->as_real() ? *c->as_real() : 0.0;
  }
  std::optional<std::int64_t> blank() const {
    auto c = find("BLANK");
    return c ? c->as_int() : std::nullopt;
  }
};

namespace detail {

inline bool is_structural(std::string_view kw) {
  return kw == "SIMPLE" || kw == "BITPIX" || kw == "END" ||
         (kw.substr(0, 5) == "NAXIS");
}

inline HeaderCard structural(const ImageHDU& hdu, std::string keyword, CardValue value,
                             const char* default_comment = nullptr) {
  HeaderCard c{std::move(keyword), std::move(value), std::nullopt};
  if (default_comment) c.comment = default_comment;
  if (auto old = hdu.find(c.keyword)) c.comment = old->comment;
  return c;
}

template <typename T>
T load_be(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<U>((u << 8) | p[i]);
  return std::bit_cast<T>(u);
}

template <typename T>
void store_be(T value, std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U u = std::bit_cast<U>(value);
  for (std::size_t i = sizeof(T); i-- > 0;) {
    p[i] = static_cast<std::uint8_t>(u & 0xff);
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
void decode(const std::uint8_t* src, Image& out, double bscale, double bzero,
            std::optional<std::int64_t> blank) {
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    T stored = load_be<T>(src + i * sizeof(T));
    if constexpr (std::is_integral_v<T>) {
      if (blank && static_cast<std::int64_t>(stored) == *blank) {
        dst[i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
    }
    dst[i] = bzero + bscale * static_cast<double>(stored);
  }
}

// Picks the stored value whose physical value reproduces `phys` exactly when
// one exists within a few ulps of the direct inverse.
template <typename T>
T unscale_float(double phys, double bscale, double bzero) {
  if (bscale == 1.0 && bzero == 0.0) return static_cast<T>(phys);
  T s = static_cast<T>((phys - bzero) / bscale);
  if (!std::isfinite(phys) || bzero + bscale * static_cast<double>(s) == phys) return s;
  T up = s, down = s;
  for (int i = 0; i < 4; ++i) {
    up = std::nextafter(up, std::numeric_limits<T>::infinity());
    down = std::nextafter(down, -std::numeric_limits<T>::infinity());
    if (bzero + bscale * static_cast<double>(up) == phys) return up;
    if (bzero + bscale * static_cast<double>(down) == phys) return down;
  }
  return s;
}

template <typename T>
void encode(const Image& in, std::uint8_t* dst, double bscale, double bzero,
            std::optional<std::int64_t> blank) {
  auto src = in.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double phys = src[i];
    T stored;
    if constexpr (std::is_integral_v<T>) {
      if (std::isnan(phys)) {
        stored = static_cast<T>(blank.value_or(0));
      } else {
        double s = std::round((phys - bzero) / bscale);
        s = std::clamp(s, static_cast<double>(std::numeric_limits<T>::lowest()),
                       static_cast<double>(std::numeric_limits<T>::max()));
        stored = static_cast<T>(s);
      }
    } else {
      stored = unscale_float<T>(phys, bscale, bzero);
    }
    store_be<T>(stored, dst + i * sizeof(T));
  }
}

inline std::size_t padded(std::size_t n) {
  return (n + kBlockSize - 1) / kBlockSize * kBlockSize;
}

inline std::int64_t require_int(const ImageHDU& hdu, std::string_view kw) {
  auto c = hdu.find(kw);
  if (!c) throw Error(Errc::MalformedHeader, "missing required keyword " + std::string(kw));
  auto v = c->as_int();
  if (!v) throw Error(Errc::MalformedHeader, std::string(kw) + " is not an integer");
  return *v;
}

}  // namespace detail

/// Header cards for `hdu` in canonical order: SIMPLE, BITPIX, NAXIS,
/// NAXIS1, NAXIS2, the remaining cards in their original order, then END.
/// A BLANK card is added when an integer image holds NaN pixels without one.
inline std::vector<HeaderCard> canonical_cards(const ImageHDU& hdu) {
  std::vector<HeaderCard> out;
  out.push_back(detail::structural(hdu, "SIMPLE", true, "conforms to FITS standard"));
  out.push_back(detail::structural(hdu, "BITPIX", std::int64_t{static_cast<int>(hdu.bitpix)},
                                   "array data type"));
  out.push_back(detail::structural(hdu, "NAXIS", std::int64_t{2}, "number of array dimensions"));
  out.push_back(detail::structural(hdu, "NAXIS1", static_cast<std::int64_t>(hdu.width())));
  out.push_back(detail::structural(hdu, "NAXIS2", static_cast<std::int64_t>(hdu.height())));
  for (const auto& c : hdu.cards) {
    if (!detail::is_structural(c.keyword)) out.push_back(c);
  }
  if (is_integer(hdu.bitpix) && !hdu.blank()) {
    auto px = hdu.pixels.values();
    if (std::any_of(px.begin(), px.end(), [](double v) { return std::isnan(v); })) {
      std::int64_t blank = hdu.bitpix == Bitpix::I8 ? 0 : hdu.bitpix == Bitpix::I16 ? -32768
                                                                                     : INT32_MIN;
      out.push_back(HeaderCard{"BLANK", blank, std::string("undefined pixel value")});
    }
  }
  out.push_back(HeaderCard{"END", {}, std::nullopt});
  return out;
}

/// Builds an HDU with only the structural cards.
inline ImageHDU make_hdu(Image pixels, Bitpix bitpix = Bitpix::F32) {
  ImageHDU hdu;
  hdu.bitpix = bitpix;
  hdu.pixels = std::move(pixels);
  hdu.cards = canonical_cards(hdu);
  return hdu;
}

/// Decodes the primary image HDU of a FITS byte stream.
inline ImageHDU parse_fits(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kBlockSize) {
    throw Error(Errc::MalformedHeader, "input shorter than one 2880-byte block");
  }
  ImageHDU hdu;
  std::size_t pos = 0;
  bool found_end = false;
  while (pos + kCardSize <= bytes.size()) {
    std::string_view rec(reinterpret_cast<const char*>(bytes.data() + pos), kCardSize);
    pos += kCardSize;
    hdu.cards.push_back(HeaderCard::parse(rec));
    if (hdu.cards.size() == 1) {
      const auto& first = hdu.cards.front();
      if (first.keyword == "XTENSION") {
        throw Error(Errc::UnsupportedBitpix, "extension HDUs are not supported");
      }
      if (first.keyword != "SIMPLE" || first.value != CardValue{true}) {
        throw Error(Errc::MalformedHeader, "first card must be SIMPLE = T");
      }
    }
    if (hdu.cards.back().keyword == "END") {
      found_end = true;
      break;
    }
  }
  if (!found_end) throw Error(Errc::MalformedHeader, "missing END card");
  const std::size_t data_start = detail::padded(pos);

  auto bp = detail::require_int(hdu, "BITPIX");
  auto bitpix = bitpix_from_int(bp);
  if (!bitpix) throw Error(Errc::UnsupportedBitpix, "BITPIX " + std::to_string(bp));
  hdu.bitpix = *bitpix;
  auto naxis = detail::require_int(hdu, "NAXIS");
  if (naxis != 2) {
    throw Error(Errc::UnsupportedBitpix,
                "only 2-D images are supported (NAXIS = " + std::to_string(naxis) + ")");
  }
  auto w = detail::require_int(hdu, "NAXIS1");
  auto h = detail::require_int(hdu, "NAXIS2");
  if (w < 1 || h < 1) throw Error(Errc::MalformedHeader, "image axes must be >= 1");
  const std::size_t bpp = bytes_per_pixel(hdu.bitpix);
  const auto uw = static_cast<std::size_t>(w), uh = static_cast<std::size_t>(h);
  if (uw > std::numeric_limits<std::size_t>::max() / uh / bpp) {
    throw Error(Errc::DimensionOverflow, "image payload size overflows");
  }
  const std::size_t nbytes = uw * uh * bpp;
  if (data_start > bytes.size() || bytes.size() - data_start < nbytes) {
    throw Error(Errc::TruncatedData, "payload shorter than NAXIS1*NAXIS2*|BITPIX|/8 = " +
                                         std::to_string(nbytes) + " bytes");
  }
  const std::size_t hdu_end = data_start + detail::padded(nbytes);
  if (bytes.size() < hdu_end) {
    throw Error(Errc::TruncatedData, "payload is not padded to a 2880-byte boundary");
  }
  if (bytes.size() >= hdu_end + 8 &&
      std::memcmp(bytes.data() + hdu_end, "XTENSION", 8) == 0) {
    throw Error(Errc::UnsupportedBitpix, "extension HDUs are not supported");
  }

  hdu.pixels = Image(uw, uh);
  const auto* src = bytes.data() + data_start;
  const double bscale = hdu.bscale(), bzero = hdu.bzero();
  const auto blank = hdu.blank();
  switch (hdu.bitpix) {
    case Bitpix::I8: detail::decode<std::uint8_t>(src, hdu.pixels, bscale, bzero, blank); break;
    case Bitpix::I16: detail::decode<std::int16_t>(src, hdu.pixels, bscale, bzero, blank); break;
    case Bitpix::I32: detail::decode<std::int32_t>(src, hdu.pixels, bscale, bzero, blank); break;
    case Bitpix::F32: detail::decode<float>(src, hdu.pixels, bscale, bzero, blank); break;
    case Bitpix::F64: detail::decode<double>(src, hdu.pixels, bscale, bzero, blank); break;
  }
  return hdu;
}

/// Serializes header and big-endian payload, each padded to 2880 bytes.
inline Bytes write_fits(const ImageHDU& hdu) {
  if (hdu.pixels.empty() || hdu.width() < 1 || hdu.height() < 1) {
    throw Error(Errc::InvalidArgument, "image must be at least 1x1");
  }
  const auto max_axis = static_cast<std::size_t>(std::numeric_limits<std::int64_t>::max());
  const std::size_t bpp = bytes_per_pixel(hdu.bitpix);
  if (hdu.width() > max_axis || hdu.height() > max_axis ||
      hdu.width() > std::numeric_limits<std::size_t>::max() / hdu.height() / bpp) {
    throw Error(Errc::DimensionOverflow, "image axis exceeds header integer range");
  }
  if (hdu.bscale() == 0.0) throw Error(Errc::MalformedHeader, "BSCALE must be non-zero");

  auto cards = canonical_cards(hdu);
  Bytes out;
  out.reserve(detail::padded(cards.size() * kCardSize) + detail::padded(hdu.pixels.size() * bpp));
  for (const auto& c : cards) {
    auto rec = c.format();
    out.insert(out.end(), rec.begin(), rec.end());
  }
  out.resize(detail::padded(out.size()), ' ');

  const std::size_t data_start = out.size();
  const std::size_t nbytes = hdu.pixels.size() * bpp;
  out.resize(data_start + detail::padded(nbytes), 0);
  auto* dst = out.data() + data_start;

  // Scaling keywords are looked up in the emitted card list so that an
  // auto-added BLANK is honoured.
  ImageHDU view;
  view.cards = cards;
  const double bscale = view.bscale(), bzero = view.bzero();
  const auto blank = view.blank();
  switch (hdu.bitpix) {
    case Bitpix::I8: detail::encode<std::uint8_t>(hdu.pixels, dst, bscale, bzero, blank); break;
    case Bitpix::I16: detail::encode<std::int16_t>(hdu.pixels, dst, bscale, bzero, blank); break;
    case Bitpix::I32: detail::encode<std::int32_t>(hdu.pixels, dst, bscale, bzero, blank); break;
    case Bitpix::F32: detail::encode<float>(hdu.pixels, dst, bscale, bzero, blank); break;
    case Bitpix::F64: detail::encode<double>(hdu.pixels, dst, bscale, bzero, blank); break;
  }
  return out;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::UnknownPath, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::UnknownPath, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace kira::fits

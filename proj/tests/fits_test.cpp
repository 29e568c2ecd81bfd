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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "kira/fits.hpp"
#include "kira/synth.hpp"

namespace kira::fits {
namespace {

std::string card(std::string_view text) {
  std::string s(text);
  s.resize(80, ' ');
  return s;
}

// Hand-assembled file: header records then raw big-endian payload.
Bytes assemble(const std::vector<std::string>& records, const Bytes& payload) {
  Bytes out;
  for (const auto& r : records) out.insert(out.end(), r.begin(), r.end());
  out.resize((out.size() + 2879) / 2880 * 2880, ' ');
  const auto start = out.size();
  out.insert(out.end(), payload.begin(), payload.end());
  out.resize(start + (payload.size() + 2879) / 2880 * 2880, 0);
  return out;
}

TEST(HeaderCard, FormatsToEightyBytes) {
  HeaderCard c{"EXPTIME", 30.5, std::string("seconds")};
  auto s = c.format();
  ASSERT_EQ(s.size(), 80u);
  EXPECT_EQ(s.substr(0, 10), "EXPTIME = ");
  EXPECT_EQ(s.substr(10, 20), "                30.5");
  EXPECT_EQ(HeaderCard::parse(s), c);
}

TEST(HeaderCard, StringQuotingAndIntegerReals) {
  HeaderCard s{"OBJECT", std::string("M31 'core'"), std::nullopt};
  EXPECT_EQ(HeaderCard::parse(s.format()), s);
  HeaderCard r{"GAIN", 2.0, std::nullopt};
  EXPECT_EQ(r.format().substr(10, 20), "                 2.0");
  EXPECT_EQ(HeaderCard::parse(r.format()), r);
  HeaderCard e{"TINY", 1e-30, std::nullopt};
  EXPECT_EQ(HeaderCard::parse(e.format()), e);
}

TEST(HeaderCard, ParsesForeignLayouts) {
  auto c = HeaderCard::parse(card("BZERO   =  3.2768D4 / offset"));
  EXPECT_DOUBLE_EQ(std::get<double>(c.value), 32768.0);
  EXPECT_EQ(c.comment, "offset");
  auto b = HeaderCard::parse(card("SIMPLE  =                    T"));
  EXPECT_EQ(b.value, CardValue{true});
  auto h = HeaderCard::parse(card("HISTORY processed twice"));
  EXPECT_EQ(h.comment, "processed twice");
}

TEST(HeaderCard, RejectsBadSyntax) {
  EXPECT_THROW(HeaderCard::parse(card("lower   = 1")), Error);
  EXPECT_THROW(HeaderCard::parse(card("NAME    = 'unterminated")), Error);
  EXPECT_THROW(HeaderCard::parse(card("NUM     = 12abc")), Error);
  EXPECT_THROW((HeaderCard{"TOOLONGKEY", std::int64_t{1}, {}}.format()), Error);
}

TEST(ParseFits, MinimalZeroImage) {
  auto f = assemble({card("SIMPLE  =                    T"), card("BITPIX  =                  -32"),
                     card("NAXIS   =                    2"), card("NAXIS1  =                    2"),
                     card("NAXIS2  =                    2"), card("END")},
                    Bytes(16, 0));
  ASSERT_EQ(f.size(), 2 * kBlockSize);
  auto hdu = parse_fits(f);
  EXPECT_EQ(hdu.width(), 2u);
  EXPECT_EQ(hdu.height(), 2u);
  EXPECT_EQ(hdu.bitpix, Bitpix::F32);
  for (double v : hdu.pixels.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(hdu.cards.front().keyword, "SIMPLE");
  EXPECT_EQ(hdu.cards.back().keyword, "END");
}

TEST(ParseFits, AppliesBzeroToSignedShorts) {
  // stored -32768 (0x8000) with BZERO 32768 -> 0.0; stored 1 -> 32769.
  auto f = assemble({card("SIMPLE  =                    T"), card("BITPIX  =                   16"),
                     card("NAXIS   =                    2"), card("NAXIS1  =                    2"),
                     card("NAXIS2  =                    1"), card("BSCALE  =                  1.0"),
                     card("BZERO   =              32768.0"), card("END")},
                    Bytes{0x80, 0x00, 0x00, 0x01});
  auto hdu = parse_fits(f);
  EXPECT_EQ(hdu.pixels(0, 0), -32768.0 * 1.0 + 32768.0);
  EXPECT_EQ(hdu.pixels(0, 0), 0.0);
  EXPECT_EQ(hdu.pixels(1, 0), 32769.0);
}

TEST(ParseFits, BlankBecomesNan) {
  auto f = assemble({card("SIMPLE  =                    T"), card("BITPIX  =                   16"),
                     card("NAXIS   =                    2"), card("NAXIS1  =                    2"),
                     card("NAXIS2  =                    1"), card("BLANK   =                   -1"),
                     card("END")},
                    Bytes{0xff, 0xff, 0x00, 0x07});
  auto hdu = parse_fits(f);
  EXPECT_TRUE(std::isnan(hdu.pixels(0, 0)));
  EXPECT_EQ(hdu.pixels(1, 0), 7.0);
  auto again = parse_fits(write_fits(hdu));
  EXPECT_TRUE(std::isnan(again.pixels(0, 0)));
  EXPECT_EQ(again.pixels(1, 0), 7.0);
}

TEST(ParseFits, Errors) {
  const std::vector<std::string> head = {card("SIMPLE  =                    T"),
                                         card("BITPIX  =                  -32"),
                                         card("NAXIS   =                    2"),
                                         card("NAXIS1  =                   10"),
                                         card("NAXIS2  =                   10")};
  auto code_of = [](const Bytes& b) {
    try {
      parse_fits(b);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidArgument;
  };
  // No END anywhere in the header block.
  EXPECT_EQ(code_of(assemble(head, {})), Errc::MalformedHeader);
  auto with_end = head;
  with_end.push_back(card("END"));
  // 400 payload bytes expected, only one block of header present.
  Bytes header_only = assemble(with_end, {});
  EXPECT_EQ(code_of(header_only), Errc::TruncatedData);
  auto bad_bitpix = with_end;
  bad_bitpix[1] = card("BITPIX  =                   64");
  EXPECT_EQ(code_of(assemble(bad_bitpix, Bytes(800, 0))), Errc::UnsupportedBitpix);
  auto cube = with_end;
  cube[2] = card("NAXIS   =                    3");
  EXPECT_EQ(code_of(assemble(cube, Bytes(400, 0))), Errc::UnsupportedBitpix);
  auto not_simple = with_end;
  not_simple[0] = card("XSIMPLE =                    T");
  EXPECT_EQ(code_of(assemble(not_simple, Bytes(400, 0))), Errc::MalformedHeader);
  EXPECT_EQ(code_of(Bytes(100, ' ')), Errc::MalformedHeader);

  auto ok = assemble(with_end, Bytes(400, 0));
  auto ext = ok;
  auto xt = assemble({card("XTENSION= 'IMAGE   '"), card("END")}, {});
  ext.insert(ext.end(), xt.begin(), xt.end());
  EXPECT_EQ(code_of(ext), Errc::UnsupportedBitpix);
}

TEST(WriteFits, ZeroImageSize) {
  auto hdu = make_hdu(Image(2, 2, 0.0));
  auto bytes = write_fits(hdu);
  EXPECT_EQ(bytes.size(), 2 * kBlockSize);
  // Payload region after the single header block is all zero.
  for (std::size_t i = kBlockSize; i < bytes.size(); ++i) ASSERT_EQ(bytes[i], 0);
}

TEST(WriteFits, ByteIdentityOfGeneratedFile) {
  std::vector<GaussianSource> src{{5, 6, 100, 1.5}};
  auto hdu = synth_image(17, 9, 10.0, src, NoiseSpec{1.0, 3});
  hdu.cards.insert(hdu.cards.end() - 1, HeaderCard{"OBSERVER", std::string("kira"), std::string("who")});
  hdu.cards.insert(hdu.cards.end() - 1, HeaderCard{"COMMENT", {}, std::string("synthetic")});
  auto f = write_fits(hdu);
  EXPECT_EQ(write_fits(parse_fits(f)), f);
}

TEST(WriteFits, BigEndianOnTheWire) {
  auto hdu = make_hdu(Image(1, 1, 1.0), Bitpix::F32);
  auto b = write_fits(hdu);
  // 1.0f == 0x3F800000
  EXPECT_EQ(b[kBlockSize + 0], 0x3F);
  EXPECT_EQ(b[kBlockSize + 1], 0x80);
  EXPECT_EQ(b[kBlockSize + 2], 0x00);
  EXPECT_EQ(b[kBlockSize + 3], 0x00);
}

TEST(WriteFits, BzeroPhysicalValuesRoundTrip) {
  Image img(3, 2);
  double v = -2.5;
  for (auto& p : img.values()) p = static_cast<float>(v += 1.25);
  auto hdu = make_hdu(img, Bitpix::F32);
  hdu.cards.insert(hdu.cards.end() - 1, HeaderCard{"BZERO", 100.0, std::nullopt});
  auto back = parse_fits(write_fits(hdu));
  EXPECT_EQ(back.pixels, hdu.pixels);
}

TEST(WriteFits, RejectsEmptyImage) {
  ImageHDU hdu;
  EXPECT_THROW(write_fits(hdu), Error);
}

// Property: parse(write(h)) reproduces dimensions, structural cards and
// bitpix-normalized pixels for generated HDUs of every supported BITPIX.
TEST(FitsProperty, RoundTripAcrossBitpix) {
  std::mt19937_64 rng(42);
  const Bitpix kinds[] = {Bitpix::I8, Bitpix::I16, Bitpix::I32, Bitpix::F32, Bitpix::F64};
  for (int trial = 0; trial < 60; ++trial) {
    const Bitpix bp = kinds[trial % 5];
    const std::size_t w = 1 + rng() % 40, h = 1 + rng() % 40;
    Image img(w, h);
    std::uniform_real_distribution<double> u(-1000, 1000);
    for (auto& p : img.values()) {
      switch (bp) {
        case Bitpix::I8: p = static_cast<double>(rng() % 256); break;
        case Bitpix::I16: p = std::round(u(rng) * 30); break;
        case Bitpix::I32: p = std::round(u(rng) * 1e6); break;
        case Bitpix::F32: p = static_cast<float>(u(rng)); break;
        case Bitpix::F64: p = u(rng); break;
      }
    }
    auto hdu = make_hdu(img, bp);
    auto bytes = write_fits(hdu);
    ASSERT_EQ(bytes.size() % kBlockSize, 0u);
    auto back = parse_fits(bytes);
    EXPECT_EQ(back.bitpix, bp);
    EXPECT_EQ(back.pixels, hdu.pixels) << "trial " << trial;
    for (const char* kw : {"SIMPLE", "BITPIX", "NAXIS", "NAXIS1", "NAXIS2"}) {
      ASSERT_NE(back.find(kw), nullptr);
      EXPECT_EQ(back.find(kw)->value, hdu.find(kw)->value);
    }
  }
}

TEST(Synth, ConstantBackground) {
  auto hdu = synth_image(8, 5, 100.0, {});
  for (double v : hdu.pixels.values()) EXPECT_EQ(v, 100.0);
}

TEST(Synth, PeakAtSourcePosition) {
  std::vector<GaussianSource> src{{32, 32, 1000, 2.0}};
  auto hdu = synth_image(64, 64, 0.0, src);
  auto px = hdu.pixels.values();
  auto it = std::max_element(px.begin(), px.end());
  auto idx = static_cast<std::size_t>(it - px.begin());
  EXPECT_EQ(idx % 64, 32u);
  EXPECT_EQ(idx / 64, 32u);
  EXPECT_EQ(*it, 1000.0);
}

TEST(Synth, SeededNoiseIsDeterministic) {
  std::vector<GaussianSource> src{{10, 10, 50, 3.0}};
  auto a = synth_image(32, 32, 5.0, src, NoiseSpec{2.0, 99});
  auto b = synth_image(32, 32, 5.0, src, NoiseSpec{2.0, 99});
  auto c = synth_image(32, 32, 5.0, src, NoiseSpec{2.0, 100});
  EXPECT_EQ(std::memcmp(a.pixels.values().data(), b.pixels.values().data(),
                        a.pixels.size() * sizeof(double)),
            0);
  EXPECT_NE(a.pixels, c.pixels);
}

TEST(Synth, RejectsNonPositiveSigma) {
  std::vector<GaussianSource> src{{1, 1, 1, 0.0}};
  EXPECT_THROW(synth_image(4, 4, 0, src), Error);
}

}  // namespace
}  // namespace kira::fits

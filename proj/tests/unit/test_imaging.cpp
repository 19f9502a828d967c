#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "hgr/error.hpp"
#include "hgr/imaging.hpp"
#include "oracles.hpp"

using namespace hgr;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> body) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

ErrorCode load_error(const std::vector<std::uint8_t>& bytes) {
  try {
    load_pnm(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("load_pnm accepted invalid input");
  return ErrorCode::Io;
}

Image random_image(std::uint64_t seed, int w, int h, int ch) {
  std::mt19937_64 rng(seed);
  Image img(w, h, ch);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

std::vector<int> ycbcr(int r, int g, int b) {
  Image px(1, 1, 3);
  px.data = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
  const Image out = rgb_to_ycbcr(px);
  return {out.data[0], out.data[1], out.data[2]};
}

}  // namespace

TEST_CASE("load_pnm reads a 2x2 gray image") {
  const Image img = load_pnm(bytes_of("P5 2 2 255 ", {0, 1, 2, 3}));
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.channels == 1);
  CHECK(img.data == std::vector<std::uint8_t>{0, 1, 2, 3});
}

TEST_CASE("load_pnm reads a 1x1 red pixel") {
  const Image img = load_pnm(bytes_of("P6 1 1 255\n", {255, 0, 0}));
  CHECK(img.channels == 3);
  CHECK(img.data == std::vector<std::uint8_t>{255, 0, 0});
}

TEST_CASE("load_pnm accepts header comments") {
  const Image img = load_pnm(bytes_of("P5\n# made by hand\n1 # width done\n1\n255\n", {9}));
  CHECK(img.data == std::vector<std::uint8_t>{9});
}

TEST_CASE("load_pnm errors") {
  SUBCASE("truncated body") {
    CHECK(load_error(bytes_of("P5 4 4 255\n", std::vector<std::uint8_t>(15, 1))) == ErrorCode::TruncatedBody);
  }
  SUBCASE("missing body") { CHECK(load_error(bytes_of("P5 4 4 255", {})) == ErrorCode::TruncatedBody); }
  SUBCASE("bad magic") { CHECK(load_error(bytes_of("P2 1 1 255\n", {0})) == ErrorCode::MalformedHeader); }
  SUBCASE("empty") { CHECK(load_error({}) == ErrorCode::MalformedHeader); }
  SUBCASE("maxval 65535") { CHECK(load_error(bytes_of("P5 1 1 65535\n", {0, 0})) == ErrorCode::UnsupportedMaxval); }
  SUBCASE("maxval 1") { CHECK(load_error(bytes_of("P5 1 1 1\n", {0})) == ErrorCode::UnsupportedMaxval); }
  SUBCASE("zero width") { CHECK(load_error(bytes_of("P5 0 1 255\n", {})) == ErrorCode::MalformedHeader); }
  SUBCASE("non numeric") { CHECK(load_error(bytes_of("P5 a 1 255\n", {0})) == ErrorCode::MalformedHeader); }
  SUBCASE("tokens run together") { CHECK(load_error(bytes_of("P51 1 255\n", {0})) == ErrorCode::MalformedHeader); }
}

TEST_CASE("save_pnm writes a canonical header") {
  Image img(1, 1, 1, 7);
  CHECK(save_pnm(img) == bytes_of("P5\n1 1\n255\n", {7}));
}

TEST_CASE("PNM round trip is bit exact") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int ch = seed % 2 ? 3 : 1;
    const Image img = random_image(seed, 1 + static_cast<int>(seed % 9), 8, ch);
    CHECK(load_pnm(save_pnm(img)) == img);
  }
  const Image rgb = random_image(99, 8, 8, 3);
  CHECK(load_pnm(save_pnm(rgb)) == rgb);
}

TEST_CASE("mask exported as P5 re-thresholds to the same mask") {
  std::mt19937_64 rng(5);
  BinaryMask mask(13, 7);
  for (auto& b : mask.bits) b = rng() & 1;
  const Image exported = mask_to_image(mask);
  for (auto v : exported.data) CHECK((v == 0 || v == 255));
  const Image back = load_pnm(save_pnm(exported));
  CHECK(threshold_image(back, 127) == mask);
}

TEST_CASE("rgb_to_ycbcr examples") {
  CHECK(ycbcr(255, 255, 255) == std::vector<int>{255, 128, 128});
  CHECK(ycbcr(128, 128, 128) == std::vector<int>{128, 128, 128});
  CHECK(ycbcr(255, 0, 0) == std::vector<int>{76, 85, 255});
  CHECK(ycbcr(0, 0, 0) == std::vector<int>{0, 128, 128});
  // Y = 0.587*255 = 149.685, Cb = 128 - 84.47, Cr = 128 - 106.77
  CHECK(ycbcr(0, 255, 0) == std::vector<int>{150, 44, 21});
  CHECK(ycbcr(0, 0, 255) == std::vector<int>{29, 255, 107});
}

TEST_CASE("rgb_to_ycbcr maps grays to neutral chroma") {
  for (int v = 0; v < 256; ++v) {
    const auto out = ycbcr(v, v, v);
    CHECK(out[0] == v);
    CHECK(out[1] == 128);
    CHECK(out[2] == 128);
  }
}

TEST_CASE("rgb_to_ycbcr on a coarse cube stays in range and matches the formulas") {
  Image cube(64, 64, 3);  // 4096 pixels, stride 17 per channel covers 0..255 corners
  std::size_t i = 0;
  for (int r = 0; r < 256; r += 17)
    for (int g = 0; g < 256; g += 17)
      for (int b = 0; b < 256; b += 17) {
        if (i + 3 > cube.data.size()) break;
        cube.data[i++] = static_cast<std::uint8_t>(r);
        cube.data[i++] = static_cast<std::uint8_t>(g);
        cube.data[i++] = static_cast<std::uint8_t>(b);
      }
  const Image out = rgb_to_ycbcr(cube);
  auto ref = [](double v) { return static_cast<int>(std::clamp(std::round(v), 0.0, 255.0)); };
  for (std::size_t p = 0; p < i; p += 3) {
    const double r = cube.data[p], g = cube.data[p + 1], b = cube.data[p + 2];
    CHECK(out.data[p] == ref(0.299 * r + 0.587 * g + 0.114 * b));
    CHECK(out.data[p + 1] == ref(128 - 0.168736 * r - 0.331264 * g + 0.5 * b));
    CHECK(out.data[p + 2] == ref(128 + 0.5 * r - 0.418688 * g - 0.081312 * b));
  }
}

TEST_CASE("rgb_to_ycbcr rejects gray input") {
  CHECK_THROWS_AS(rgb_to_ycbcr(Image(2, 2, 1)), Error);
  try {
    rgb_to_ycbcr(Image(2, 2, 1));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WrongChannelCount);
  }
}

TEST_CASE("to_luma equals the Y plane") {
  const Image rgb = random_image(3, 9, 5, 3);
  const Image y = to_luma(rgb);
  const Image full = rgb_to_ycbcr(rgb);
  REQUIRE(y.channels == 1);
  for (std::size_t p = 0; p < y.data.size(); ++p) CHECK(y.data[p] == full.data[3 * p]);
}

TEST_CASE("resize_nearest identity and idempotence") {
  const Image img = random_image(11, 7, 5, 3);
  CHECK(resize_nearest(img, 7, 5) == img);
  const Image small = resize_nearest(img, 3, 2);
  CHECK(resize_nearest(small, 3, 2) == small);
}

TEST_CASE("resize_nearest block-replicates a 2x2 mask") {
  BinaryMask m(2, 2);
  m.set(0, 0, true);
  m.set(1, 1, true);
  const BinaryMask big = resize_nearest(m, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(big.get(x, y) == ((x < 2) == (y < 2)));
}

TEST_CASE("resize_nearest 96 to 48 samples odd offsets") {
  const Image img = random_image(4, 96, 96, 1);
  const Image half = resize_nearest(img, 48, 48);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) CHECK(half.at(x, y) == img.at(2 * x + 1, 2 * y + 1));
}

TEST_CASE("resize_nearest keeps masks binary") {
  std::mt19937_64 rng(8);
  BinaryMask m(17, 11);
  for (auto& b : m.bits) b = rng() & 1;
  for (auto [w, h] : std::vector<std::pair<int, int>>{{48, 48}, {5, 3}, {1, 1}, {40, 7}}) {
    const BinaryMask r = resize_nearest(m, w, h);
    for (auto b : r.bits) CHECK((b == 0 || b == 1));
  }
}

TEST_CASE("resize_nearest rejects zero targets") {
  try {
    resize_nearest(Image(2, 2, 1), 0, 3);
    FAIL("accepted zero width");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroDimension);
  }
  CHECK_THROWS_AS(resize_nearest(BinaryMask(2, 2), 2, 0), Error);
}

TEST_CASE("integral_image small cases") {
  const IntegralTable ones = integral_image(Image(4, 4, 1, 1));
  CHECK(ones.sum_at(4, 4) == 16);
  const IntegralTable c = integral_image(Image(5, 3, 1, 200));
  CHECK(c.sqsum_at(5, 3) == 15LL * 200 * 200);
  for (int x = 0; x <= 5; ++x) CHECK(c.sum_at(x, 0) == 0);
  for (int y = 0; y <= 3; ++y) CHECK(c.sum_at(0, y) == 0);
}

TEST_CASE("integral_image matches brute force on every rectangle") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Image img = random_image(seed, 8, 8, 1);
    const IntegralTable t = integral_image(img);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int h = 0; y + h <= 8; ++h)
          for (int w = 0; x + w <= 8; ++w) {
            REQUIRE(t.rect_sum(x, y, w, h) == oracle::rect_sum(img, x, y, w, h));
            REQUIRE(t.rect_sqsum(x, y, w, h) == oracle::rect_sqsum(img, x, y, w, h));
          }
  }
}

TEST_CASE("integral_image is monotone and does not overflow") {
  const IntegralTable t = integral_image(random_image(12, 30, 20, 1));
  for (int y = 0; y <= 20; ++y)
    for (int x = 1; x <= 30; ++x) CHECK(t.sum_at(x, y) >= t.sum_at(x - 1, y));
  const IntegralTable big = integral_image(Image(4096, 4096, 1, 255));
  CHECK(big.sqsum_at(4096, 4096) == 4096LL * 4096 * 255 * 255);
}

TEST_CASE("integral_image rejects colour input") {
  CHECK_THROWS_AS(integral_image(Image(2, 2, 3)), Error);
}

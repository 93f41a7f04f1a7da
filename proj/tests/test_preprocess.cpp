#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmsift/preprocess.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mmsift;
using mmsift::testing::Rng;
using mmsift::testing::random_image;
using mmsift::testing::oracle_downsample;

namespace {

// Background reachable from the border through 4-neighbours, by repeated
// relaxation sweeps until nothing changes.
BinaryMask filled_by_relaxation(const BinaryMask& m) {
  const int w = m.width(), h = m.height();
  BinaryMask reach(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (!m(r, c) && (r == 0 || c == 0 || r == h - 1 || c == w - 1)) reach(r, c) = 1;
  for (bool changed = true; changed;) {
    changed = false;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (m(r, c) || reach(r, c)) continue;
        const bool near = (r > 0 && reach(r - 1, c)) || (c > 0 && reach(r, c - 1)) ||
                          (r + 1 < h && reach(r + 1, c)) || (c + 1 < w && reach(r, c + 1));
        if (near) reach(r, c) = changed = true;
      }
    }
  }
  BinaryMask out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] = !reach.pixels()[i];
  return out;
}

GrayImage16 square_on_black(int side, int r0, int c0, int size, std::uint16_t v) {
  GrayImage16 img(side, side, 0);
  for (int r = r0; r < r0 + size; ++r)
    for (int c = c0; c < c0 + size; ++c) img(r, c) = v;
  return img;
}

}  // namespace

TEST_CASE("breast extraction picks the bright square exactly") {
  const auto img = square_on_black(64, 10, 20, 20, 30000);
  const auto mask = extract_breast_region(img);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) REQUIRE(mask(r, c) == (r >= 10 && r < 30 && c >= 20 && c < 40));
}

TEST_CASE("breast extraction keeps only the largest component") {
  GrayImage16 img(64, 64, 0);
  for (int r = 2; r < 7; ++r)
    for (int c = 2; c < 12; ++c) img(r, c) = 20000;  // 50 px
  for (int r = 30; r < 50; ++r)
    for (int c = 30; c < 50; ++c) img(r, c) = 20000;  // 400 px
  const auto mask = extract_breast_region(img);
  CHECK(mask.count() == 400);
  CHECK(mask(40, 40) == 1);
  CHECK(mask(4, 4) == 0);
}

TEST_CASE("holes inside the breast are filled, matching a relaxation oracle") {
  auto img = square_on_black(48, 8, 8, 30, 40000);
  for (int r = 18; r < 22; ++r)
    for (int c = 18; c < 24; ++c) img(r, c) = 0;

  BinaryMask raw(48, 48);
  const auto t = otsu_threshold(img);
  for (std::size_t i = 0; i < img.size(); ++i) raw.pixels()[i] = img.pixels()[i] > t;
  CHECK(raw(20, 20) == 0);

  const auto mask = extract_breast_region(img);
  CHECK(mask(20, 20) == 1);
  CHECK(mask == filled_by_relaxation(largest_component(raw)));

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    BinaryMask m(20, 15);
    for (auto& v : m.pixels()) v = rng.below(3) != 0;
    REQUIRE(fill_holes(m) == filled_by_relaxation(m));
  }
}

TEST_CASE("constant images are degenerate for extraction") {
  for (std::uint16_t v : {0, 1234, 65535}) {
    try {
      extract_breast_region(GrayImage16(16, 16, v));
      FAIL("expected degenerate input");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Degenerate);
    }
  }
}

TEST_CASE("Otsu separates a bimodal histogram") {
  Rng rng(5);
  GrayImage16 img(40, 40);
  for (int r = 0; r < 40; ++r)
    for (int c = 0; c < 40; ++c)
      img(r, c) = static_cast<std::uint16_t>(c < 20 ? 1000 + rng.below(500) : 50000 + rng.below(500));
  const auto t = otsu_threshold(img);
  CHECK(t >= 1499);
  CHECK(t < 50000);
}

TEST_CASE("crop_to_mask takes the tight box") {
  GrayImage16 img(30, 12);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 30; ++c) img(r, c) = static_cast<std::uint16_t>(r * 100 + c);
  BinaryMask m(30, 12);
  for (int r = 3; r <= 7; ++r)
    for (int c = 10; c <= 20; ++c) m(r, c) = 1;
  auto [crop, off] = crop_to_mask(img, m);
  CHECK(crop.height() == 5);
  CHECK(crop.width() == 11);
  CHECK(off == CropOffset{3, 10});
  CHECK(crop(0, 0) == img(3, 10));
  CHECK(crop(4, 10) == img(7, 20));

  auto [whole, zero] = crop_to_mask(img, testing::full_mask(30, 12));
  CHECK(whole == img);
  CHECK(zero == CropOffset{0, 0});

  BinaryMask one(30, 12);
  one(6, 6) = 1;
  auto [px, at] = crop_to_mask(img, one);
  CHECK(px.width() == 1);
  CHECK(px.height() == 1);
  CHECK(px(0, 0) == img(6, 6));
  CHECK(at == CropOffset{6, 6});

  CHECK_THROWS_AS(crop_to_mask(img, BinaryMask(30, 12)), Error);
}

TEST_CASE("normalize_16bit rounds half up and is idempotent") {
  GrayImage16 img(3, 1, std::vector<std::uint16_t>{0, 8191, 16383});
  const auto out = normalize_16bit(img);
  const auto mid = static_cast<std::uint16_t>(std::floor(65535.0L * 8191 / 16383 + 0.5L));
  CHECK(mid == 32765);
  CHECK(out(0, 0) == 0);
  CHECK(out(0, 1) == mid);
  CHECK(out(0, 2) == 65535);

  GrayImage16 full(2, 1, std::vector<std::uint16_t>{0, 65535});
  CHECK(normalize_16bit(full) == full);
  CHECK(normalize_16bit(GrayImage16(4, 4, 321)) == GrayImage16(4, 4, 0));

  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_image(rng, 9, 7, 1 + rng.below(4000));
    const auto n1 = normalize_16bit(x);
    REQUIRE(normalize_16bit(n1) == n1);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto [lo, hi] = std::minmax_element(x.pixels().begin(), x.pixels().end());
      if (*hi == *lo) break;
      const long double exact = 65535.0L * (x.pixels()[i] - *lo) / (*hi - *lo);
      REQUIRE(n1.pixels()[i] == static_cast<std::uint16_t>(std::floor(exact + 0.5L)));
    }
  }
}

TEST_CASE("pad_square pads bottom and right with zeros") {
  GrayImage16 img(5, 3, 9);
  const auto sq = pad_square(img);
  CHECK(sq.width() == 5);
  CHECK(sq.height() == 5);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) CHECK(sq(r, c) == (r < 3 ? 9 : 0));

  GrayImage16 tall(1, 4, 3);
  const auto t = pad_square(tall);
  CHECK(t.width() == 4);
  CHECK(t.height() == 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(t(r, c) == (c == 0 ? 3 : 0));

  Rng rng(7);
  const auto s = random_image(rng, 6, 6);
  CHECK(pad_square(s) == s);
}

TEST_CASE("db2 low-pass taps are mean-normalized") {
  const auto h = db2_lowpass();
  CHECK(h[0] + h[1] + h[2] + h[3] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(h[0] == doctest::Approx((1 + std::sqrt(3.0)) / 8));
}

TEST_CASE("wavelet_downsample preserves constants exactly") {
  for (std::uint16_t v : {0, 1, 40000, 65535}) {
    for (int side : {8, 9, 31, 64}) {
      const auto out = wavelet_downsample(GrayImage16(side, side, v));
      CHECK(out.width() == ((side + 1) / 2 + 1) / 2);
      REQUIRE(out == GrayImage16(out.width(), out.height(), v, out.pixel_size_mm()));
    }
  }
  CHECK(wavelet_downsample(GrayImage16(64, 64, 40000)).width() == 16);
}

TEST_CASE("wavelet_downsample matches the direct convolution oracle") {
  Rng rng(8);
  int worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto img = random_image(rng, 32, 32);
    const auto got = wavelet_downsample(img);
    const auto want = oracle_downsample(img);
    REQUIRE(got.width() == 8);
    for (std::size_t i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(int(got.pixels()[i]) - int(want.pixels()[i])));
  }
  CHECK(worst <= 1);

  for (int side : {8, 13, 27}) {
    const auto img = random_image(rng, side, side);
    const auto got = wavelet_downsample(img);
    const auto want = oracle_downsample(img);
    for (std::size_t i = 0; i < got.size(); ++i)
      REQUIRE(std::abs(int(got.pixels()[i]) - int(want.pixels()[i])) <= 1);
  }
}

TEST_CASE("wavelet_downsample turns an x ramp into a 4x steeper ramp") {
  GrayImage16 img(64, 64);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) img(r, c) = static_cast<std::uint16_t>(100 * c + 50);
  const auto out = wavelet_downsample(img);
  const auto want = oracle_downsample(img);
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c + 2 < out.width(); ++c) {
      REQUIRE(std::abs(int(out(r, c)) - int(want(r, c))) <= 1);
      REQUIRE(std::abs(int(out(r, c + 1)) - int(out(r, c)) - 400) <= 1);
    }
  }
}

TEST_CASE("wavelet_downsample rejects small or non-square input") {
  CHECK_THROWS_AS(wavelet_downsample(GrayImage16(7, 7)), Error);
  CHECK_THROWS_AS(wavelet_downsample(GrayImage16(8, 9)), Error);
}

TEST_CASE("preprocess composes the stages on a breast-like phantom") {
  Rng rng(9);
  GrayImage16 img(512, 400, 0, 0.07);
  for (int r = 0; r < 400; ++r) {
    for (int c = 0; c < 512; ++c) {
      const double dr = (r - 199.5) / 200.0, dc = c / 512.0;
      if (dr * dr + dc * dc <= 1.0) img(r, c) = static_cast<std::uint16_t>(20000 + rng.below(3000));
    }
  }
  const auto res = preprocess(img);
  CHECK(res.geometry.padded_side == 512);
  CHECK(res.image.width() == 128);
  CHECK(res.image.height() == 128);
  CHECK(res.breast_mask.width() == 128);
  CHECK(res.effective_pixel_size_mm == doctest::Approx(0.28));
  CHECK(res.image.pixel_size_mm() == doctest::Approx(0.28));
  CHECK(res.crop_offset == CropOffset{0, 0});
  CHECK(res.geometry == preprocess_geometry(img));

  // Decimated mask: a set pixel iff its 4x4 source block holds a set pixel.
  const auto region = pad_square(extract_breast_region(img));
  for (int r = 0; r < 128; ++r) {
    for (int c = 0; c < 128; ++c) {
      bool any = false;
      for (int dr = 0; dr < 4; ++dr)
        for (int dc = 0; dc < 4; ++dc) any = any || region(4 * r + dr, 4 * c + dc);
      REQUIRE(res.breast_mask(r, c) == any);
    }
  }
}

TEST_CASE("preprocess crops before normalizing and reports the offset") {
  auto img = square_on_black(64, 12, 20, 24, 30000);
  img(20, 30) = 31000;
  const auto res = preprocess(img);
  CHECK(res.crop_offset == CropOffset{12, 20});
  CHECK(res.geometry.crop_height == 24);
  CHECK(res.geometry.crop_width == 24);
  CHECK(res.image.width() == 6);
}

TEST_CASE("preprocess reduces to wavelet_downsample on square normalized input") {
  Rng rng(10);
  GrayImage16 img(64, 64);
  for (auto& v : img.pixels()) v = static_cast<std::uint16_t>(40000 + rng.below(20000));
  for (int r = 28; r < 36; ++r)
    for (int c = 28; c < 36; ++c) img(r, c) = 0;
  img(5, 5) = 65535;
  const auto res = preprocess(img);
  CHECK(res.crop_offset == CropOffset{0, 0});
  CHECK(res.image == wavelet_downsample(img));
  CHECK(res.breast_mask.count() == res.breast_mask.size());
}

TEST_CASE("preprocess of an all-zero image is degenerate") {
  try {
    preprocess(GrayImage16(32, 32, 0));
    FAIL("expected degenerate input");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

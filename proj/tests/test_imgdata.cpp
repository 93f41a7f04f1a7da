#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "mmsift/imgdata.hpp"
#include "support.hpp"

using namespace mmsift;
using mmsift::testing::Rng;
using mmsift::testing::TempDir;
using mmsift::testing::random_image;
using mmsift::testing::write_file;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an mmsift::Error");
  return ErrorKind::Validation;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// Crossing-number test written independently of the library's scanline fill.
bool inside(const std::vector<PointXY>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

}  // namespace

TEST_CASE("PGM P5 samples are big-endian and row-major") {
  TempDir dir;
  const std::string header = "P5\n2 2\n65535\n";
  const unsigned char data[] = {0x00, 0x00, 0x00, 0x64, 0x00, 0xC8, 0xFF, 0xFF};
  write_file(dir / "a.pgm", header + std::string(reinterpret_cast<const char*>(data), sizeof data));
  const auto img = load_gray16(dir / "a.pgm");
  REQUIRE(img.width() == 2);
  REQUIRE(img.height() == 2);
  CHECK(img(0, 0) == 0);
  CHECK(img(0, 1) == 100);
  CHECK(img(1, 0) == 200);
  CHECK(img(1, 1) == 65535);
  CHECK(img.pixel_size_mm() == doctest::Approx(0.07));
}

TEST_CASE("16-bit PNG and PGM round-trip bit-exactly") {
  TempDir dir;
  Rng rng(1);
  for (const char* ext : {".png", ".pgm"}) {
    const auto a = random_image(rng, 64, 64);
    save_gray16(a, dir / (std::string("a") + ext));
    CHECK(load_gray16(dir / (std::string("a") + ext)) == a);

    const auto b = random_image(rng, 33, 17);
    save_gray16(b, dir / (std::string("b") + ext));
    CHECK(load_gray16(dir / (std::string("b") + ext)) == b);

    const GrayImage16 c(5, 3, 7);
    save_gray16(c, dir / (std::string("c") + ext));
    CHECK(load_gray16(dir / (std::string("c") + ext)) == c);
  }
}

TEST_CASE("load_gray16 reports missing files, bit depth and headers distinctly") {
  TempDir dir;
  CHECK(kind_of([&] { load_gray16(dir / "nope.png"); }) == ErrorKind::Io);

  save_gray8(Gray8(4, 4, 9), dir / "eight.png");
  CHECK(kind_of([&] { load_gray16(dir / "eight.png"); }) == ErrorKind::Unsupported);
  CHECK(message_of([&] { load_gray16(dir / "eight.png"); }).find("unsupported bit depth") != std::string::npos);

  write_file(dir / "bad.pgm", "P5\n2 x\n65535\n");
  CHECK(kind_of([&] { load_gray16(dir / "bad.pgm"); }) == ErrorKind::Format);
  CHECK(message_of([&] { load_gray16(dir / "bad.pgm"); }).find("corrupt header") != std::string::npos);

  write_file(dir / "noise.bin", "hello world");
  CHECK(kind_of([&] { load_gray16(dir / "noise.bin"); }) == ErrorKind::Format);

  write_file(dir / "p255.pgm", "P5\n1 1\n255\nx");
  CHECK(kind_of([&] { load_gray16(dir / "p255.pgm"); }) == ErrorKind::Unsupported);
}

TEST_CASE("saving into a missing directory is an I/O error") {
  TempDir dir;
  CHECK(kind_of([&] { save_gray16(GrayImage16(2, 2), dir / "missing" / "x.png"); }) == ErrorKind::Io);
  CHECK(kind_of([&] { save_gray16(GrayImage16(2, 2), dir / "missing" / "x.pgm"); }) == ErrorKind::Io);
}

TEST_CASE("RGB pseudo-color images round-trip and validate channel lengths") {
  TempDir dir;
  Rng rng(2);
  PseudoColorImage pcm{16, 16, {}, {}, {}};
  for (auto* ch : {&pcm.r, &pcm.g, &pcm.b})
    for (int i = 0; i < 256; ++i) ch->push_back(static_cast<std::uint8_t>(rng.below(256)));
  save_rgb8(pcm, dir / "p.png");
  CHECK(load_rgb8(dir / "p.png") == pcm);

  PseudoColorImage black{3, 2, std::vector<std::uint8_t>(6, 0), std::vector<std::uint8_t>(6, 0),
                         std::vector<std::uint8_t>(6, 0)};
  save_rgb8(black, dir / "k.png");
  CHECK(load_rgb8(dir / "k.png") == black);

  PseudoColorImage broken{3, 2, std::vector<std::uint8_t>(6, 0), std::vector<std::uint8_t>(5, 0),
                          std::vector<std::uint8_t>(6, 0)};
  CHECK(kind_of([&] { broken.validate(); }) == ErrorKind::Validation);
  CHECK_THROWS_AS(save_rgb8(broken, dir / "b.png"), Error);
}

TEST_CASE("masks are stored as 0/255 and read back as any-nonzero") {
  TempDir dir;
  BinaryMask m(5, 4);
  m(1, 2) = 1;
  m(3, 4) = 1;
  save_mask(m, dir / "m.png");
  CHECK(load_gray8(dir / "m.png")(1, 2) == 255);
  CHECK(load_mask(dir / "m.png") == m);
}

TEST_CASE("label PNG: one mass per label, physical area from the pixel count") {
  TempDir dir;
  Gray8 labels(10, 8, 0);
  labels(2, 3) = labels(2, 4) = labels(3, 3) = labels(3, 4) = 1;
  save_gray8(labels, dir / "l.png");
  const auto masses = load_annotation(dir / "l.png", 10, 8, 0.07);
  REQUIRE(masses.size() == 1);
  CHECK(masses[0].mask.count() == 4);
  CHECK(masses[0].area_mm2 == doctest::Approx(4 * 0.07 * 0.07).epsilon(1e-12));

  labels(6, 8) = 5;
  save_gray8(labels, dir / "l2.png");
  const auto two = load_annotation(dir / "l2.png", 10, 8, 0.07);
  REQUIRE(two.size() == 2);
  CHECK(two[1].mask.count() == 1);
  CHECK(two[1].mask(6, 8) == 1);

  CHECK(kind_of([&] { load_annotation(dir / "l.png", 11, 8, 0.07); }) == ErrorKind::Validation);
  CHECK(message_of([&] { load_annotation(dir / "l.png", 11, 8, 0.07); }).find("label image size mismatch") !=
        std::string::npos);
}

TEST_CASE("empty annotation file means no masses") {
  TempDir dir;
  write_file(dir / "e.json", "");
  CHECK(load_annotation(dir / "e.json", 8, 8, 0.07).empty());
  write_file(dir / "m.json", R"({"masses": []})");
  CHECK(load_annotation(dir / "m.json", 8, 8, 0.07).empty());
}

TEST_CASE("polygon rasterization agrees with a point-in-polygon scan") {
  const std::vector<PointXY> square{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  const auto m = rasterize_polygon(square, 16, 16);
  CHECK(m.count() == 100);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) CHECK(m(r, c) == (r < 10 && c < 10));

  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<PointXY> poly;
    const int n = 3 + rng.below(6);
    for (int i = 0; i < n; ++i) poly.push_back({rng.unit() * 30 - 3, rng.unit() * 25 - 3});
    const auto got = rasterize_polygon(poly, 24, 20);
    for (int r = 0; r < 20; ++r)
      for (int c = 0; c < 24; ++c) REQUIRE(got(r, c) == inside(poly, c + 0.5, r + 0.5));
  }
}

TEST_CASE("polygon annotations: JSON schema and degenerate polygons") {
  TempDir dir;
  write_file(dir / "a.json", R"({"masses": [{"polygon": [[0,0],[10,0],[10,10],[0,10]]}, {"polygon": [[12,12],[15,12],[15,15]]}]})");
  const auto masses = load_annotation(dir / "a.json", 16, 16, 0.1);
  REQUIRE(masses.size() == 2);
  CHECK(masses[0].mask.count() == 100);
  CHECK(masses[0].area_mm2 == doctest::Approx(1.0));

  write_file(dir / "two.json", R"({"masses": [{"polygon": [[0,0],[10,0]]}]})");
  CHECK(kind_of([&] { load_annotation(dir / "two.json", 16, 16, 0.1); }) == ErrorKind::Validation);

  write_file(dir / "thin.json", R"({"masses": [{"polygon": [[0,0],[10,0],[10,0.2]]}]})");
  CHECK(kind_of([&] { load_annotation(dir / "thin.json", 16, 16, 0.1); }) == ErrorKind::Validation);

  write_file(dir / "junk.json", R"({"masses": [{"poly": []}]})");
  CHECK(kind_of([&] { load_annotation(dir / "junk.json", 16, 16, 0.1); }) == ErrorKind::Format);
}

TEST_CASE("manifest parsing resolves paths and selects splits") {
  const auto m = parse_manifest(R"({
    "pixel_size_mm": 0.07,
    "splits": [
      {"id": 0, "entries": [
        {"image": "a.png", "annotation": "a.json", "role": "train"},
        {"image": "/abs/b.png", "annotation": null, "role": "test"}]},
      {"id": 3, "entries": [{"image": "a.png", "role": "validation"}]}
    ]})",
                                "/data/set");
  CHECK(m.pixel_size_mm == doctest::Approx(0.07));
  CHECK(m.split_ids() == std::vector<int>{0, 3});
  const auto train = m.select(0, FoldRole::Train);
  REQUIRE(train.size() == 1);
  CHECK(train[0].image_path == fs::path("/data/set/a.png"));
  CHECK(train[0].annotation_path == fs::path("/data/set/a.json"));
  const auto test = m.select(0, FoldRole::Test);
  REQUIRE(test.size() == 1);
  CHECK(test[0].image_path == fs::path("/abs/b.png"));
  CHECK_FALSE(test[0].annotation_path.has_value());
  CHECK(m.select(3, FoldRole::Validation).size() == 1);
  CHECK(image_stem("/x/y/case_01.png") == "case_01");
}

TEST_CASE("manifest errors carry their position") {
  auto err = [](const std::string& text) { return message_of([&] { parse_manifest(text, "/d"); }); };
  CHECK(err(R"({"splits": [{"id": 0, "entries": [{"image": "a.png", "role": "dev"}]}]})")
            .find("splits[0].entries[0].role") != std::string::npos);
  CHECK(err(R"({"splits": [{"id": 0, "entries": [{"image": "a.png", "role": "test"}, {"image": "a.png", "role": "train"}]}]})")
            .find("splits[0].entries[1].image") != std::string::npos);
  CHECK(err(R"({"splits": [{"id": 1, "entries": []}, {"id": 1, "entries": []}]})").find("duplicate split id") !=
        std::string::npos);
  CHECK(err(R"({"splits": [{"id": -1, "entries": []}]})").find("splits[0].id") != std::string::npos);
  CHECK(err(R"({"splits": [{"id": 0, "entries": [{"image": "a.png", "role": "test", "extra": 1}]}]})")
            .find("unknown key") != std::string::npos);
  CHECK(kind_of([] { parse_manifest(R"({"pixel_size_mm": [0.07, 0.05], "splits": []})", "/d"); }) ==
        ErrorKind::Unsupported);
  CHECK(kind_of([] { parse_manifest("{not json", "/d"); }) == ErrorKind::Format);
  CHECK(kind_of([] { load_manifest("/definitely/not/here.json"); }) == ErrorKind::Io);
}

TEST_CASE("raw 32-bit rasters: header layout and round trip") {
  TempDir dir;
  GrayImage32 img(3, 2, std::vector<std::uint32_t>{0, 1, 0xdeadbeef, 70000, 5, 0xffffffff});
  save_raw32(img, dir / "b.raw");
  std::ifstream in(dir / "b.raw", std::ios::binary);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 8 + 4 * 6);
  CHECK(std::vector<unsigned char>(bytes.begin(), bytes.begin() + 8) ==
        std::vector<unsigned char>{3, 0, 0, 0, 2, 0, 0, 0});
  CHECK(std::vector<unsigned char>(bytes.begin() + 16, bytes.begin() + 20) ==
        std::vector<unsigned char>{0xef, 0xbe, 0xad, 0xde});
  CHECK(load_raw32(dir / "b.raw") == img);

  write_file(dir / "short.raw", std::string("\x03\x00\x00\x00\x02\x00\x00\x00\x01", 9));
  CHECK(kind_of([&] { load_raw32(dir / "short.raw"); }) == ErrorKind::Format);
  CHECK(kind_of([&] { load_raw32(dir / "none.raw"); }) == ErrorKind::Io);
}

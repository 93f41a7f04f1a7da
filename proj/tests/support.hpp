#pragma once

// Shared helpers for the test binaries: deterministic random rasters and
// small synthetic phantoms.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>

#include "mmsift/raster.hpp"

namespace mmsift::testing {

// Raw engine output only; std distributions are not portable bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(engine_() >> 48); }
  int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

inline GrayImage16 random_image(Rng& rng, int width, int height, int levels = 65536) {
  GrayImage16 img(width, height);
  for (auto& v : img.pixels())
    v = static_cast<std::uint16_t>(levels == 65536 ? rng.u16() : rng.below(levels));
  return img;
}

inline GrayImage16 disc_phantom(int side, double diameter, std::uint16_t value,
                                double centre_row = -1, double centre_col = -1) {
  GrayImage16 img(side, side);
  const double cr = centre_row < 0 ? (side - 1) / 2.0 : centre_row;
  const double cc = centre_col < 0 ? (side - 1) / 2.0 : centre_col;
  const double r2 = diameter * diameter / 4.0;
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= r2) img(r, c) = value;
  return img;
}

inline BinaryMask full_mask(int width, int height) {
  return BinaryMask(width, height, std::uint8_t{1});
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mmsift_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

}  // namespace mmsift::testing

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmsift/error.hpp"

namespace mmsift {

/// Row-major single-channel raster. Pixel (row, col) lives at
/// row * width + col.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;

  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    require(width >= 0 && height >= 0, "raster dimensions must be non-negative");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  Raster(int width, int height, std::vector<T> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    require(width >= 0 && height >= 0, "raster dimensions must be non-negative");
    require(pixels_.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
            "pixel count " + std::to_string(pixels_.size()) + " does not match " +
                std::to_string(width) + "x" + std::to_string(height));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  bool contains(int row, int col) const noexcept {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  T& operator()(int row, int col) noexcept {
    return pixels_[static_cast<std::size_t>(row) * width_ + col];
  }
  const T& operator()(int row, int col) const noexcept {
    return pixels_[static_cast<std::size_t>(row) * width_ + col];
  }

  std::span<T> pixels() noexcept { return pixels_; }
  std::span<const T> pixels() const noexcept { return pixels_; }

  std::span<T> row(int r) noexcept {
    return std::span<T>(pixels_).subspan(static_cast<std::size_t>(r) * width_, width_);
  }
  std::span<const T> row(int r) const noexcept {
    return std::span<const T>(pixels_).subspan(static_cast<std::size_t>(r) * width_, width_);
  }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> pixels_;
};

inline constexpr double kDefaultPixelSizeMm = 0.07;

/// 16-bit grayscale image with isotropic physical pixel size.
class GrayImage16 : public Raster<std::uint16_t> {
 public:
  GrayImage16() = default;
  GrayImage16(int width, int height, std::uint16_t fill = 0,
              double pixel_size_mm = kDefaultPixelSizeMm)
      : Raster(width, height, fill), pixel_size_mm_(pixel_size_mm) {
    check_spacing();
  }
  GrayImage16(int width, int height, std::vector<std::uint16_t> pixels,
              double pixel_size_mm = kDefaultPixelSizeMm)
      : Raster(width, height, std::move(pixels)), pixel_size_mm_(pixel_size_mm) {
    check_spacing();
  }

  double pixel_size_mm() const noexcept { return pixel_size_mm_; }
  void set_pixel_size_mm(double mm) {
    pixel_size_mm_ = mm;
    check_spacing();
  }

  friend bool operator==(const GrayImage16&, const GrayImage16&) = default;

 private:
  void check_spacing() const {
    require(pixel_size_mm_ > 0.0, "pixel_size_mm must be positive");
  }

  double pixel_size_mm_ = kDefaultPixelSizeMm;
};

using GrayImage32 = Raster<std::uint32_t>;
using Gray8 = Raster<std::uint8_t>;

/// Boolean raster stored one byte per pixel (0 or 1).
class BinaryMask : public Raster<std::uint8_t> {
 public:
  using Raster::Raster;

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto v : pixels()) n += v != 0;
    return n;
  }

  bool any() const noexcept {
    for (auto v : pixels())
      if (v) return true;
    return false;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct PseudoColorImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> r, g, b;

  /// Throws Validation when a channel length disagrees with width x height.
  void validate() const;

  friend bool operator==(const PseudoColorImage&, const PseudoColorImage&) = default;
};

/// Inclusive tight bounding box, (row0, col0) .. (row1, col1).
struct BBox {
  int row0 = 0;
  int col0 = 0;
  int row1 = -1;
  int col1 = -1;

  bool empty() const noexcept { return row1 < row0 || col1 < col0; }
  int height() const noexcept { return empty() ? 0 : row1 - row0 + 1; }
  int width() const noexcept { return empty() ? 0 : col1 - col0 + 1; }

  friend bool operator==(const BBox&, const BBox&) = default;
  friend auto operator<=>(const BBox&, const BBox&) = default;
};

BBox bounding_box(const BinaryMask& mask);

}  // namespace mmsift

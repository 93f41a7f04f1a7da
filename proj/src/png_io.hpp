#pragma once

// Thin libpng wrapper shared by the raster loaders. Internal header.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mmsift::detail {

struct PngPixels {
  int width = 0;
  int height = 0;
  int bit_depth = 0;  // 8 or 16
  int channels = 0;   // 1 (gray) or 3 (rgb)
  // Samples in row-major order; 16-bit samples are already host integers.
  std::vector<std::uint16_t> samples;
  bool anisotropic = false;
};

bool has_png_signature(const std::filesystem::path& path);

PngPixels read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngPixels& png);

}  // namespace mmsift::detail

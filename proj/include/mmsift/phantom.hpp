#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmsift/raster.hpp"

namespace mmsift {

// Synthetic mammogram-like test images: a half-ellipse of textured tissue on a
// black field, with flat-topped bright discs as masses.

struct PhantomMass {
  double row = 0.0;  // centre, input pixels
  double col = 0.0;
  double diameter_px = 0.0;
  std::uint16_t contrast = 0;
};

struct PhantomSpec {
  std::string name;
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
  std::vector<PhantomMass> masses;
};

GrayImage16 render_phantom(const PhantomSpec& spec, double pixel_size_mm = kDefaultPixelSizeMm);

/// Vertices of a regular polygon traced on the mass outline, in the pixel
/// corner coordinates used by annotation files.
std::vector<std::pair<double, double>> mass_outline(const PhantomMass& mass, int vertices = 64);

/// The bundled two-split dataset: five images with one mass each, one
/// mass-free image.
std::vector<PhantomSpec> phantom_dataset_specs();

/// Writes the images (16-bit PNG), annotations (polygon JSON, plus one label
/// PNG) and manifest.json into `dir`.
void write_phantom_dataset(const std::filesystem::path& dir);

}  // namespace mmsift

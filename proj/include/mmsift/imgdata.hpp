#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmsift/raster.hpp"

namespace mmsift {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Raster file I/O
//
// Supported on disk:
//   16-bit PGM (P5, maxval 65535, big-endian samples)
//   16-bit grayscale PNG
//   8-bit grayscale PNG (masks and label images only)
//   8-bit RGB PNG (pseudo-color output only)
// ---------------------------------------------------------------------------

/// Loads a 16-bit single-channel PGM or PNG. The format is sniffed from the
/// file magic, not the extension. Intensities are preserved bit-exactly.
GrayImage16 load_gray16(const fs::path& path, double pixel_size_mm = kDefaultPixelSizeMm);

/// Writes a 16-bit grayscale PNG, or a P5 PGM when the extension is ".pgm".
void save_gray16(const GrayImage16& img, const fs::path& path);

/// 8-bit grayscale PNG, used for masks (0/255) and label images.
Gray8 load_gray8(const fs::path& path);
void save_gray8(const Gray8& img, const fs::path& path);

/// Masks are written as 0/255 and read back as any-nonzero.
void save_mask(const BinaryMask& mask, const fs::path& path);
BinaryMask load_mask(const fs::path& path);

void save_rgb8(const PseudoColorImage& img, const fs::path& path);
PseudoColorImage load_rgb8(const fs::path& path);

/// Flat 32-bit raster: width and height as uint32 little-endian, then
/// width * height uint32 little-endian samples in row-major order.
void save_raw32(const GrayImage32& img, const fs::path& path);
GrayImage32 load_raw32(const fs::path& path);

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

struct GroundTruthMass {
  BinaryMask mask;
  double area_mm2 = 0.0;
};

GroundTruthMass make_mass(BinaryMask mask, double pixel_size_mm);

struct PointXY {
  double x = 0.0;
  double y = 0.0;
};

/// Even-odd fill. Vertices are in pixel-corner coordinates, so pixel
/// (row, col) is covered when its centre (col + 0.5, row + 0.5) is inside.
BinaryMask rasterize_polygon(std::span<const PointXY> polygon, int width, int height);

/// Reads either an 8-bit label PNG (0 = background, one mass per distinct
/// positive label) or a JSON document {"masses": [{"polygon": [[x,y],...]}]}.
/// Masses are returned in ascending label order / document order.
std::vector<GroundTruthMass> load_annotation(const fs::path& path, int width, int height,
                                             double pixel_size_mm);

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

enum class FoldRole { Train, Validation, Test };

const char* to_string(FoldRole role) noexcept;
FoldRole parse_fold_role(const std::string& text);

struct ManifestEntry {
  fs::path image_path;
  std::optional<fs::path> annotation_path;
  int split_id = 0;
  FoldRole fold_role = FoldRole::Test;
};

struct DatasetManifest {
  double pixel_size_mm = kDefaultPixelSizeMm;
  std::vector<ManifestEntry> entries;

  std::vector<int> split_ids() const;
  std::vector<ManifestEntry> select(int split_id, FoldRole role) const;
};

/// Parses the manifest JSON. Relative paths resolve against the manifest's
/// directory. Any invalid entry fails the whole parse with a JSON-pointer-like
/// position in the message ("splits[1].entries[3].role: ...").
DatasetManifest load_manifest(const fs::path& path);
DatasetManifest parse_manifest(const std::string& json_text, const fs::path& base_dir);

/// File stem used to name every per-image artefact.
std::string image_stem(const fs::path& image_path);

}  // namespace mmsift

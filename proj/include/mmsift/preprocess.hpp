#pragma once

#include <algorithm>
#include <array>

#include "mmsift/raster.hpp"

namespace mmsift {

inline constexpr int kResizeFactor = 4;

struct CropOffset {
  int row = 0;
  int col = 0;

  friend bool operator==(const CropOffset&, const CropOffset&) = default;
};

/// Where the working raster sits in input coordinates.
struct WorkingGeometry {
  CropOffset crop_offset;  // crop origin in input coordinates
  int crop_height = 0;
  int crop_width = 0;
  int padded_side = 0;  // side of the square before subsampling
  int side = 0;         // side of the subsampled image

  friend bool operator==(const WorkingGeometry&, const WorkingGeometry&) = default;
};

struct PreprocessResult {
  GrayImage16 image;       // subsampled, normalized, square
  BinaryMask breast_mask;  // same size as image
  CropOffset crop_offset;
  WorkingGeometry geometry;
  double effective_pixel_size_mm = 0.0;
};

/// Otsu threshold over the full 16-bit histogram: the smallest t that
/// maximises the between-class variance of {v <= t} and {v > t}. Throws
/// Degenerate for an empty or constant image.
std::uint16_t otsu_threshold(const GrayImage16& img);

/// Largest 8-connected component of pixels above the Otsu threshold, with
/// holes (background regions not 4-connected to the border) filled.
BinaryMask extract_breast_region(const GrayImage16& img);

/// Largest 8-connected component of a mask; ties go to the component met
/// first in raster order.
BinaryMask largest_component(const BinaryMask& mask);

/// Sets every unset pixel that is not 4-connected to the image border
/// through unset pixels.
BinaryMask fill_holes(const BinaryMask& mask);

template <typename Image>
Image crop(const Image& img, const BBox& box) {
  Image out(box.width(), box.height());
  for (int r = 0; r < box.height(); ++r) {
    const auto src = img.row(box.row0 + r).subspan(box.col0, box.width());
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

struct CropResult {
  GrayImage16 image;
  CropOffset offset;
};

CropResult crop_to_mask(const GrayImage16& img, const BinaryMask& mask);

/// Min-max rescale to [0, 65535] with round-half-up; constant input gives zeros.
GrayImage16 normalize_16bit(const GrayImage16& img);

/// Zero-pads on the bottom and right to a square of side max(width, height).
GrayImage16 pad_square(const GrayImage16& img);
BinaryMask pad_square(const BinaryMask& mask);

/// Normalised Daubechies-2 analysis low-pass taps (sum to 1).
std::array<double, 4> db2_lowpass();

/// Two-level separable db2 transform; returns the level-2 LL subband with
/// side ceil(ceil(side / 2) / 2). Even-indexed filter outputs are kept and the
/// signal is extended by half-point symmetry past its end. Requires a square
/// image with side >= 8.
GrayImage16 wavelet_downsample(const GrayImage16& img);

/// OR over each factor x factor block; partial blocks at the edges count.
BinaryMask decimate_or(const BinaryMask& mask, int factor, int out_width, int out_height);

/// Side after two halvings with rounding up.
int subsampled_side(int side);

WorkingGeometry geometry_of(const BinaryMask& breast_region);

/// Geometry preprocess() would produce, without the pixel work.
WorkingGeometry preprocess_geometry(const GrayImage16& img);

/// extract -> crop -> normalize -> pad -> wavelet_downsample.
PreprocessResult preprocess(const GrayImage16& img);

}  // namespace mmsift

#pragma once

#include <optional>
#include <vector>

#include "mmsift/raster.hpp"

namespace mmsift {

struct SiftConfig {
  double a_min_mm2 = 15.0;
  double a_max_mm2 = 3689.0;
  int num_scales = 2;
  int num_orientations = 18;
  double pixel_size_mm = kDefaultPixelSizeMm;
  int resize_factor = 4;

  /// Throws Validation naming the first offending field.
  void validate() const;

  friend bool operator==(const SiftConfig&, const SiftConfig&) = default;
};

struct ScaleBand {
  int index = 1;
  double m1_px = 0.0;
  double m2_px = 0.0;
  int m1_rounded = 1;
  int m2_rounded = 1;
};

/// Nearest odd integer, ties upward.
int round_to_odd(double x);

/// M(i) = (2 / (P S)) sqrt(A_min / pi) (A_max / A_min)^e with e = 0.5 (i-1) / I
/// for the small magnitude and e = 0.5 i / I for the large one.
std::vector<ScaleBand> compute_scale_bands(const SiftConfig& cfg);

/// Orientation angle n * 180 / N in degrees.
double orientation_deg(int n, int num_orientations);

/// Sum over N orientations of open(F - open(F, L(m2)), L(m1)).
/// `jobs` > 1 spreads orientations over worker threads; the result does not
/// depend on it.
GrayImage32 mms_single_scale(const GrayImage16& img, const ScaleBand& band, int num_orientations,
                             int jobs = 1);

struct SiftOutput {
  std::vector<GrayImage32> bands;
  SiftConfig config;
};

SiftOutput sift(const GrayImage16& img, const SiftConfig& cfg, int jobs = 1);

/// round(255 (v - vmin) / (vmax - vmin)) with vmin, vmax taken over `region`
/// (the whole image when absent); values outside the region are clamped.
/// A constant region maps everything to 0.
Gray8 scale_to_8bit(const GrayImage32& img, const std::optional<BinaryMask>& region = std::nullopt);
Gray8 scale_to_8bit(const GrayImage16& img, const std::optional<BinaryMask>& region = std::nullopt);

/// R = gray mammogram, G = band 1, B = band 2, each scaled over the breast mask.
/// Throws Unsupported unless there are exactly two bands.
PseudoColorImage compose_pcm(const GrayImage16& gm, const SiftOutput& bands, const BinaryMask& breast_mask);

}  // namespace mmsift

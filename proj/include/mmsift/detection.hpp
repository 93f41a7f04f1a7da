#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmsift/raster.hpp"
#include "mmsift/sifting.hpp"

namespace mmsift {

struct Detection {
  BinaryMask mask;
  BBox bbox;
  double score = 0.0;
  std::optional<int> source_band;  // empty for externally produced detections

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectorParams {
  double quantile_q = 0.99;
  double a_min_mm2 = 15.0;
  double a_max_mm2 = 3689.0;
  double nms_iou = 0.5;

  double min_area_px(double effective_pixel_size_mm) const;
  double max_area_px(double effective_pixel_size_mm) const;

  void validate() const;

  friend bool operator==(const DetectorParams&, const DetectorParams&) = default;
};

/// Nearest-rank q-quantile: the smallest value v such that at least q of the
/// samples are <= v. `values` is reordered.
std::uint32_t quantile_nearest_rank(std::vector<std::uint32_t>& values, double q);

/// Pixel intersection-over-union; 0 when both masks are empty.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Greedy suppression: walks detections in order and drops any whose mask IoU
/// with an already kept one exceeds `iou`.
std::vector<Detection> suppress_overlaps(std::vector<Detection> dets, double iou);

/// Descending score; ties by bbox, then source band.
void sort_detections(std::vector<Detection>& dets);

/// Baseline blob detector over sift bands. Per band, pixels with value >= the
/// q-quantile over the breast and > 0 form 8-connected components; components
/// whose physical area lies in [A_min, A_max] become candidates scored by
/// mean value / band maximum over the breast. Candidates from all bands are
/// merged by suppress_overlaps and returned sorted.
std::vector<Detection> blob_detect(const SiftOutput& bands, const BinaryMask& breast_mask,
                                   const DetectorParams& params, double effective_pixel_size_mm);

Detection make_detection(BinaryMask mask, double score, std::optional<int> source_band);

/// Row-major alternating run lengths, beginning with a (possibly empty) run of
/// unset pixels.
std::vector<std::uint32_t> encode_rle(const BinaryMask& mask);

/// Inverse of encode_rle. The runs must cover exactly width x height pixels.
BinaryMask decode_rle(const std::vector<std::uint32_t>& runs, int width, int height);

struct DetectionFile {
  std::string image;
  std::vector<Detection> detections;
};

/// Reads {"image": stem, "detections": [{"score", "mask_rle" | "mask_png",
/// "bbox"?, "source_band"?}]}. PNG paths resolve against the file's
/// directory. Bounding boxes are recomputed and scores clamped to [0, 1].
DetectionFile read_detection_file(const std::filesystem::path& path, int width, int height);

std::vector<Detection> import_detections(const std::filesystem::path& path, int width, int height);

/// Writes masks as RLE.
void write_detection_file(const std::filesystem::path& path, const std::string& image_stem,
                          const std::vector<Detection>& dets);

}  // namespace mmsift

#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmsift/detection.hpp"
#include "mmsift/imgdata.hpp"
#include "mmsift/preprocess.hpp"

namespace mmsift {

/// 2 |a & b| / (|a| + |b|). Throws Validation on a size mismatch or when both
/// masks are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

struct TpPair {
  int detection = 0;
  int truth = 0;
  double dsi = 0.0;

  friend bool operator==(const TpPair&, const TpPair&) = default;
};

struct MatchResult {
  std::vector<TpPair> tp_pairs;
  std::vector<int> fp_indices;
  std::vector<int> fn_gt_indices;
};

/// Walks detections by descending score (ties by index); each claims the
/// unclaimed ground truth of highest DSI >= threshold (ties by index) or is a
/// false positive.
MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruthMass> truths,
                             double dsi_threshold = 0.2);

struct FrocPoint {
  double fpi = 0.0;
  double tpr = 0.0;

  friend bool operator==(const FrocPoint&, const FrocPoint&) = default;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // fpi strictly increasing

  friend bool operator==(const FrocCurve&, const FrocCurve&) = default;
};

struct ImageCase {
  std::string stem;
  std::vector<Detection> detections;
  std::vector<GroundTruthMass> truths;
};

/// One operating point per candidate threshold.
struct SweepPoint {
  double threshold = 0.0;  // detections with score >= threshold are kept
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  double fpi = 0.0;
  double tpr = 0.0;
  double mean_dsi = 0.0;  // over true positives; 0 without any
};

/// Thresholds are +inf followed by every distinct score, descending.
std::vector<SweepPoint> threshold_sweep(std::span<const ImageCase> cases, double dsi_threshold = 0.2);

/// Sweep points collapsed to one point per FPI (highest TPR), sorted by FPI.
/// Throws Validation when the cases hold no ground-truth mass.
FrocCurve froc(std::span<const ImageCase> cases, double dsi_threshold = 0.2);

/// Linear interpolation on the curve extended left with (0, TPR at zero FPI or
/// 0) and right with (inf, last TPR).
double tpr_at_fpi(const FrocCurve& curve, double fpi_ref);

/// Mean of the extended curve over [fpi_lo, fpi_hi] by the trapezoidal rule.
double partial_aufc(const FrocCurve& curve, double fpi_lo = 0.0, double fpi_hi = 5.0);

struct EvalConfig {
  double dsi_threshold = 0.2;
  double fpi_ref = 0.9;
  double aufc_lo = 0.0;
  double aufc_hi = 5.0;

  void validate() const;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct SplitReport {
  int split_id = 0;
  double tpr_at_ref_fpi = 0.0;
  double aufc = 0.0;
  double mean_dsi = 0.0;
  int n_images = 0;
  int n_masses = 0;
  double operating_threshold = std::numeric_limits<double>::infinity();
  double operating_fpi = 0.0;
  FrocCurve curve;

  friend bool operator==(const SplitReport&, const SplitReport&) = default;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;

  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

struct EvalReport {
  EvalConfig config;
  std::string resolution = "working";
  std::string detector;
  std::vector<SplitReport> splits;
  MeanStd tpr_at_ref_fpi;
  MeanStd aufc;
  MeanStd mean_dsi;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Metrics of one split. The operating point is the lowest threshold whose
/// FPI does not exceed fpi_ref; mean DSI is taken over its true positives.
SplitReport evaluate_cases(int split_id, std::span<const ImageCase> cases, const EvalConfig& cfg);

/// Mean and population standard deviation.
MeanStd mean_std(std::span<const double> values);

EvalReport aggregate(std::vector<SplitReport> splits, const EvalConfig& cfg, std::string detector = "");

/// Ground truth in input coordinates brought to the working raster: cropped
/// and padded like the image, then reduced over kResizeFactor-sided blocks by
/// majority vote (at least half the block set). When the vote leaves nothing
/// but the cropped mask is nonempty, blocks are ORed instead.
BinaryMask truth_to_working(const BinaryMask& full, const WorkingGeometry& geometry);

/// Loads the cases of one split and role: ground truth from the manifest,
/// detections from `<detections_dir>/<stem>.json`. All missing detection
/// files are listed in a single Io error.
std::vector<ImageCase> load_split_cases(const DatasetManifest& manifest, int split_id, FoldRole role,
                                        const std::filesystem::path& detections_dir);

SplitReport evaluate_split(const DatasetManifest& manifest, int split_id, FoldRole role,
                           const std::filesystem::path& detections_dir, const EvalConfig& cfg);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
std::string curve_to_csv(const FrocCurve& curve);
std::string froc_svg(const EvalReport& report);

/// Writes report.json, froc_split{k}.csv per split and froc.svg.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace mmsift

#pragma once

#include <string>

#include "mmsift/detection.hpp"
#include "mmsift/evaluation.hpp"
#include "mmsift/sifting.hpp"

namespace mmsift {

struct IoPaths {
  std::string manifest;
  std::string out_dir;
  std::string detections_dir;  // empty: run the baseline detector
  std::string role = "test";

  friend bool operator==(const IoPaths&, const IoPaths&) = default;
};

struct PipelineConfig {
  SiftConfig sift;
  DetectorParams detector;
  EvalConfig eval;
  IoPaths io;
  // False once a config file sets sift.pixel_size_mm; otherwise the pipeline
  // takes the spacing from the manifest.
  bool pixel_size_from_manifest = true;

  void validate() const;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Overlays a JSON document of the form
///   {"sift": {...SiftConfig}, "detector": {...DetectorParams},
///    "eval": {"dsi_threshold", "fpi_ref", "aufc_range": [lo, hi]},
///    "io": {"manifest", "out_dir", "detections_dir", "role"}}
/// onto `base`. Every key is optional; unknown keys and wrongly typed values
/// raise Format naming the key path. The result is validated.
PipelineConfig parse_pipeline_config(const std::string& json_text, PipelineConfig base = {});
/// Relative io paths set by the file resolve against the file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path, PipelineConfig base = {});

/// A bare SiftConfig object, same key names as the "sift" section.
SiftConfig parse_sift_config(const std::string& json_text, SiftConfig base = {});
SiftConfig load_sift_config(const std::filesystem::path& path, SiftConfig base = {});

/// Canonical JSON of every resolved field.
std::string pipeline_config_to_json(const PipelineConfig& cfg);
std::string sift_config_to_json(const SiftConfig& cfg);
std::string detector_params_to_json(const DetectorParams& params);

}  // namespace mmsift

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mmsift/config.hpp"
#include "mmsift/detection.hpp"
#include "mmsift/evaluation.hpp"
#include "mmsift/imgdata.hpp"
#include "mmsift/preprocess.hpp"
#include "mmsift/sifting.hpp"

namespace mmsift {

inline constexpr const char* kBaselineDetectorLabel = "baseline blob detector (not a trained Mask R-CNN)";
inline constexpr const char* kImportedDetectorLabel = "imported detections";

// ---------------------------------------------------------------------------
// Per-image products
// ---------------------------------------------------------------------------

/// Writes <stem>_pre.png (16-bit), <stem>_mask.png and <stem>_pre.json.
void write_preprocess_products(const PreprocessResult& pre, const fs::path& dir, const std::string& stem);

/// Band values divided by N and rounded, for 16-bit display.
GrayImage16 band_display(const GrayImage32& band, int num_orientations);

struct SiftProducts {
  std::string image;
  SiftOutput sift;
  double effective_pixel_size_mm = 0.0;
  std::string mask;  // breast mask used for scaling, empty when none
};

/// Writes <prefix>_band{i}.png, <prefix>_band{i}.raw, <prefix>_sift.json and,
/// with exactly two bands, <prefix>_pcm.png. Returns whether the PCM was written.
bool write_sift_products(const fs::path& prefix, const std::string& image, const GrayImage16& pre,
                         const BinaryMask& breast_mask, const SiftOutput& out, const std::string& mask_path = {});

/// Reads back <prefix>_sift.json and the raw bands it lists.
SiftProducts load_sift_products(const fs::path& prefix);

// ---------------------------------------------------------------------------
// Dataset evaluation
// ---------------------------------------------------------------------------

/// Evaluates every split of the manifest for `role`.
EvalReport evaluate_dataset(const DatasetManifest& manifest, FoldRole role, const fs::path& detections_dir,
                            const EvalConfig& cfg, const std::string& detector_label);

/// Manifest entries with `role` in any split, first occurrence order, one per
/// image path. Throws Validation when two images share a stem.
std::vector<ManifestEntry> images_with_role(const DatasetManifest& manifest, FoldRole role);

// ---------------------------------------------------------------------------
// End-to-end run
// ---------------------------------------------------------------------------

/// An Error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause) : Error(cause.kind(), cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Filled while the pipeline runs, so it is meaningful after a failure too.
struct PipelineRecord {
  PipelineConfig config;
  std::string stage;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  EvalReport report;
};

/// preprocess -> sift/PCM -> detect (skipped when io.detections_dir is set)
/// -> evaluate. Output layout under io.out_dir:
///   pre/<stem>_pre.png, pre/<stem>_mask.png, pre/<stem>_pre.json
///   sift/<stem>_band{i}.png|.raw, sift/<stem>_pcm.png, sift/<stem>_sift.json
///   detections/<stem>.json
///   report.json, froc_split{k}.csv, froc.svg
/// Per-image work is spread over `jobs` threads. Throws StageError.
void run_pipeline(const PipelineConfig& cfg, int jobs, PipelineRecord& record);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads. The first exception
/// in index order is rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace mmsift

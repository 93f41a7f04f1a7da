#pragma once

// Dataset-level fixtures shared by the CLI tests and the acceptance binary.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "mmsift/detection.hpp"
#include "mmsift/evaluation.hpp"
#include "mmsift/imgdata.hpp"
#include "mmsift/preprocess.hpp"

namespace mmsift::testing {

/// The phantom dataset generated by the build (see tests/CMakeLists.txt).
inline std::filesystem::path phantom_dir() { return MMSIFT_PHANTOM_DIR; }

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// One detection per annotated mass, equal to its ground truth on the working
/// raster, scored 1.0. Every image in the manifest gets a file.
inline void write_perfect_detections(const std::filesystem::path& manifest_path, const std::filesystem::path& dir) {
  const auto manifest = load_manifest(manifest_path);
  std::filesystem::create_directories(dir);
  std::set<std::filesystem::path> done;
  for (const auto& e : manifest.entries) {
    if (!done.insert(e.image_path).second) continue;
    const auto img = load_gray16(e.image_path, manifest.pixel_size_mm);
    const auto geometry = preprocess_geometry(img);
    std::vector<Detection> dets;
    if (e.annotation_path)
      for (const auto& m : load_annotation(*e.annotation_path, img.width(), img.height(), manifest.pixel_size_mm))
        dets.push_back(make_detection(truth_to_working(m.mask, geometry), 1.0, std::nullopt));
    const auto stem = image_stem(e.image_path);
    write_detection_file(dir / (stem + ".json"), stem, dets);
  }
}

}  // namespace mmsift::testing

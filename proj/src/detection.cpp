#include "mmsift/detection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mmsift/components.hpp"
#include "mmsift/imgdata.hpp"

namespace mmsift {

using nlohmann::json;

double DetectorParams::min_area_px(double effective_pixel_size_mm) const {
  return a_min_mm2 / (effective_pixel_size_mm * effective_pixel_size_mm);
}

double DetectorParams::max_area_px(double effective_pixel_size_mm) const {
  return a_max_mm2 / (effective_pixel_size_mm * effective_pixel_size_mm);
}

void DetectorParams::validate() const {
  require(quantile_q > 0.0 && quantile_q < 1.0, "detector.quantile_q must lie in (0, 1)");
  require(a_min_mm2 > 0.0 && a_max_mm2 > a_min_mm2, "detector area bounds must satisfy 0 < a_min_mm2 < a_max_mm2");
  require(nms_iou > 0.0 && nms_iou <= 1.0, "detector.nms_iou must lie in (0, 1]");
}

std::uint32_t quantile_nearest_rank(std::vector<std::uint32_t>& values, double q) {
  require(!values.empty(), "quantile of an empty sample");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require(a.same_shape(b), "IoU masks differ in size");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.pixels()[i], y = b.pixels()[i];
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

bool boxes_overlap(const BBox& a, const BBox& b) {
  return a.row0 <= b.row1 && b.row0 <= a.row1 && a.col0 <= b.col1 && b.col0 <= a.col1;
}

}  // namespace

std::vector<Detection> suppress_overlaps(std::vector<Detection> dets, double iou) {
  std::vector<Detection> kept;
  for (auto& d : dets) {
    bool drop = false;
    for (const auto& k : kept) {
      if (boxes_overlap(d.bbox, k.bbox) && mask_iou(d.mask, k.mask) > iou) {
        drop = true;
        break;
      }
    }
    if (!drop) kept.push_back(std::move(d));
  }
  return kept;
}

void sort_detections(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.bbox != b.bbox) return a.bbox < b.bbox;
    return a.source_band.value_or(0) < b.source_band.value_or(0);
  });
}

Detection make_detection(BinaryMask mask, double score, std::optional<int> source_band) {
  Detection d;
  d.bbox = bounding_box(mask);
  require(!d.bbox.empty(), "detection mask is empty");
  d.mask = std::move(mask);
  d.score = std::clamp(score, 0.0, 1.0);
  d.source_band = source_band;
  return d;
}

std::vector<Detection> blob_detect(const SiftOutput& bands, const BinaryMask& breast_mask,
                                   const DetectorParams& params, double effective_pixel_size_mm) {
  params.validate();
  require(effective_pixel_size_mm > 0.0, "effective pixel size must be positive");
  if (!breast_mask.any()) fail(ErrorKind::Degenerate, "breast mask is empty");
  const double px_area = effective_pixel_size_mm * effective_pixel_size_mm;

  std::vector<Detection> candidates;
  for (std::size_t b = 0; b < bands.bands.size(); ++b) {
    const GrayImage32& band = bands.bands[b];
    require(band.same_shape(breast_mask), "band and breast mask differ in size");

    std::vector<std::uint32_t> inside;
    for (std::size_t i = 0; i < band.size(); ++i)
      if (breast_mask.pixels()[i]) inside.push_back(band.pixels()[i]);
    const std::uint32_t peak = *std::max_element(inside.begin(), inside.end());
    if (peak == 0) continue;
    const std::uint32_t thr = quantile_nearest_rank(inside, params.quantile_q);

    BinaryMask hot(band.width(), band.height());
    for (std::size_t i = 0; i < band.size(); ++i) {
      const auto v = band.pixels()[i];
      hot.pixels()[i] = breast_mask.pixels()[i] && v >= thr && v > 0;
    }

    const auto cc = label_components(hot, 8);
    for (const auto& comp : cc.components) {
      const double area_mm2 = static_cast<double>(comp.area) * px_area;
      if (area_mm2 < params.a_min_mm2 || area_mm2 > params.a_max_mm2) continue;
      BinaryMask m(band.width(), band.height());
      std::uint64_t sum = 0;
      for (int r = comp.bbox.row0; r <= comp.bbox.row1; ++r) {
        for (int c = comp.bbox.col0; c <= comp.bbox.col1; ++c) {
          if (cc.labels(r, c) != comp.label) continue;
          m(r, c) = 1;
          sum += band(r, c);
        }
      }
      const double mean = static_cast<double>(sum) / static_cast<double>(comp.area);
      candidates.push_back(make_detection(std::move(m), mean / peak, static_cast<int>(b) + 1));
    }
  }

  sort_detections(candidates);
  return suppress_overlaps(std::move(candidates), params.nms_iou);
}

std::vector<std::uint32_t> encode_rle(const BinaryMask& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (auto v : mask.pixels()) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit != current) {
      runs.push_back(length);
      current = bit;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

BinaryMask decode_rle(const std::vector<std::uint32_t>& runs, int width, int height) {
  BinaryMask out(width, height);
  const std::uint64_t total = out.size();
  std::uint64_t pos = 0;
  std::uint8_t bit = 0;
  for (auto len : runs) {
    if (pos + len > total)
      fail(ErrorKind::Format, "RLE overrun: runs exceed " + std::to_string(total) + " pixels");
    std::fill_n(out.pixels().begin() + static_cast<std::ptrdiff_t>(pos), len, bit);
    pos += len;
    bit ^= 1;
  }
  if (pos != total)
    fail(ErrorKind::Format,
         "RLE covers " + std::to_string(pos) + " of " + std::to_string(total) + " pixels");
  return out;
}

namespace {

[[noreturn]] void schema_error(const std::filesystem::path& path, const std::string& where, const std::string& what) {
  fail(ErrorKind::Format, path.string() + ": " + where + ": " + what);
}

}  // namespace

DetectionFile read_detection_file(const std::filesystem::path& path, int width, int height) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "missing file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Format, path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) schema_error(path, "(root)", "expected an object");
  for (const auto& [key, _] : doc.items())
    if (key != "image" && key != "detections") schema_error(path, key, "unknown key");

  DetectionFile out;
  if (doc.contains("image")) {
    if (!doc["image"].is_string()) schema_error(path, "image", "expected a string");
    out.image = doc["image"].get<std::string>();
  }
  if (!doc.contains("detections") || !doc["detections"].is_array())
    schema_error(path, "detections", "expected an array");

  const auto base = path.parent_path();
  const auto& list = doc["detections"];
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string at = "detections[" + std::to_string(i) + "]";
    const auto& d = list[i];
    if (!d.is_object()) schema_error(path, at, "expected an object");
    for (const auto& [key, _] : d.items())
      if (key != "score" && key != "mask_rle" && key != "mask_png" && key != "bbox" && key != "source_band")
        schema_error(path, at + "." + key, "unknown key");

    if (!d.contains("score") || !d["score"].is_number()) schema_error(path, at + ".score", "expected a number");
    const double score = d["score"].get<double>();
    if (!std::isfinite(score)) schema_error(path, at + ".score", "not finite");

    const bool has_rle = d.contains("mask_rle"), has_png = d.contains("mask_png");
    if (has_rle == has_png) schema_error(path, at, "exactly one of mask_rle or mask_png is required");

    BinaryMask mask;
    if (has_rle) {
      const auto& r = d["mask_rle"];
      if (!r.is_array()) schema_error(path, at + ".mask_rle", "expected an array");
      std::vector<std::uint32_t> runs;
      for (const auto& v : r) {
        if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xffffffffULL)
          schema_error(path, at + ".mask_rle", "run lengths must be 32-bit unsigned integers");
        runs.push_back(v.get<std::uint32_t>());
      }
      try {
        mask = decode_rle(runs, width, height);
      } catch (const Error& e) {
        schema_error(path, at + ".mask_rle", e.what());
      }
    } else {
      if (!d["mask_png"].is_string()) schema_error(path, at + ".mask_png", "expected a path string");
      std::filesystem::path p = d["mask_png"].get<std::string>();
      if (p.is_relative()) p = base / p;
      mask = load_mask(p);
      if (mask.width() != width || mask.height() != height)
        schema_error(path, at + ".mask_png",
                     "mask size mismatch: " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                         " vs image " + std::to_string(width) + "x" + std::to_string(height));
    }
    if (!mask.any()) schema_error(path, at, "mask is empty");

    std::optional<int> band;
    if (d.contains("source_band") && !d["source_band"].is_null()) {
      if (!d["source_band"].is_number_integer()) schema_error(path, at + ".source_band", "expected an integer");
      band = d["source_band"].get<int>();
    }
    out.detections.push_back(make_detection(std::move(mask), score, band));
  }
  return out;
}

std::vector<Detection> import_detections(const std::filesystem::path& path, int width, int height) {
  return read_detection_file(path, width, height).detections;
}

void write_detection_file(const std::filesystem::path& path, const std::string& image_stem,
                          const std::vector<Detection>& dets) {
  json list = json::array();
  for (const auto& d : dets) {
    json item;
    item["score"] = d.score;
    item["bbox"] = {d.bbox.row0, d.bbox.col0, d.bbox.row1, d.bbox.col1};
    item["source_band"] = d.source_band ? json(*d.source_band) : json(nullptr);
    item["mask_rle"] = encode_rle(d.mask);
    list.push_back(std::move(item));
  }
  const json doc = {{"image", image_stem}, {"detections", std::move(list)}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace mmsift

#include "mmsift/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace mmsift {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  fail(ErrorKind::Format, "config " + where + ": " + what);
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Format, std::string("config: invalid JSON: ") + e.what());
  }
}

const json& section(const json& doc, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!doc.is_object()) schema_error(where, "expected an object");
  for (const auto& [key, _] : doc.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) schema_error(where.empty() ? key : where + "." + key, "unknown key");
  }
  return doc;
}

void read_real(const json& obj, const std::string& where, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj[key];
  if (!v.is_number()) schema_error(where + "." + key, "expected a number");
  out = v.get<double>();
}

void read_int(const json& obj, const std::string& where, const char* key, int& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj[key];
  if (!v.is_number_integer()) schema_error(where + "." + key, "expected an integer");
  out = v.get<int>();
}

void read_string(const json& obj, const std::string& where, const char* key, std::string& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj[key];
  if (v.is_null()) {
    out.clear();
    return;
  }
  if (!v.is_string()) schema_error(where + "." + key, "expected a string");
  out = v.get<std::string>();
}

SiftConfig overlay_sift(const json& obj, const std::string& where, SiftConfig cfg) {
  section(obj, where,
          {"a_min_mm2", "a_max_mm2", "num_scales", "num_orientations", "pixel_size_mm", "resize_factor"});
  read_real(obj, where, "a_min_mm2", cfg.a_min_mm2);
  read_real(obj, where, "a_max_mm2", cfg.a_max_mm2);
  read_int(obj, where, "num_scales", cfg.num_scales);
  read_int(obj, where, "num_orientations", cfg.num_orientations);
  read_real(obj, where, "pixel_size_mm", cfg.pixel_size_mm);
  read_int(obj, where, "resize_factor", cfg.resize_factor);
  return cfg;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "missing file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json sift_json(const SiftConfig& c) {
  return {{"a_min_mm2", c.a_min_mm2},           {"a_max_mm2", c.a_max_mm2},
          {"num_scales", c.num_scales},         {"num_orientations", c.num_orientations},
          {"pixel_size_mm", c.pixel_size_mm},   {"resize_factor", c.resize_factor}};
}

json detector_json(const DetectorParams& p) {
  return {{"quantile_q", p.quantile_q}, {"a_min_mm2", p.a_min_mm2}, {"a_max_mm2", p.a_max_mm2}, {"nms_iou", p.nms_iou}};
}

}  // namespace

void PipelineConfig::validate() const {
  sift.validate();
  detector.validate();
  eval.validate();
  parse_fold_role(io.role);
}

PipelineConfig parse_pipeline_config(const std::string& json_text, PipelineConfig cfg) {
  const json doc = parse_text(json_text);
  section(doc, "", {"sift", "detector", "eval", "io"});

  if (doc.contains("sift")) {
    cfg.sift = overlay_sift(doc["sift"], "sift", cfg.sift);
    if (doc["sift"].contains("pixel_size_mm")) cfg.pixel_size_from_manifest = false;
  }
  if (doc.contains("detector")) {
    const auto& d = section(doc["detector"], "detector", {"quantile_q", "a_min_mm2", "a_max_mm2", "nms_iou"});
    read_real(d, "detector", "quantile_q", cfg.detector.quantile_q);
    read_real(d, "detector", "a_min_mm2", cfg.detector.a_min_mm2);
    read_real(d, "detector", "a_max_mm2", cfg.detector.a_max_mm2);
    read_real(d, "detector", "nms_iou", cfg.detector.nms_iou);
  }
  if (doc.contains("eval")) {
    const auto& e = section(doc["eval"], "eval", {"dsi_threshold", "fpi_ref", "aufc_range"});
    read_real(e, "eval", "dsi_threshold", cfg.eval.dsi_threshold);
    read_real(e, "eval", "fpi_ref", cfg.eval.fpi_ref);
    if (e.contains("aufc_range")) {
      const auto& r = e["aufc_range"];
      if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
        schema_error("eval.aufc_range", "expected [lo, hi]");
      cfg.eval.aufc_lo = r[0].get<double>();
      cfg.eval.aufc_hi = r[1].get<double>();
    }
  }
  if (doc.contains("io")) {
    const auto& io = section(doc["io"], "io", {"manifest", "out_dir", "detections_dir", "role"});
    read_string(io, "io", "manifest", cfg.io.manifest);
    read_string(io, "io", "out_dir", cfg.io.out_dir);
    read_string(io, "io", "detections_dir", cfg.io.detections_dir);
    read_string(io, "io", "role", cfg.io.role);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path, PipelineConfig base) {
  const IoPaths before = base.io;
  PipelineConfig cfg = parse_pipeline_config(read_file(path), std::move(base));
  auto anchor = [&](std::string& p, const std::string& old) {
    if (!p.empty() && p != old && std::filesystem::path(p).is_relative())
      p = (path.parent_path() / p).lexically_normal().string();
  };
  anchor(cfg.io.manifest, before.manifest);
  anchor(cfg.io.out_dir, before.out_dir);
  anchor(cfg.io.detections_dir, before.detections_dir);
  return cfg;
}

SiftConfig parse_sift_config(const std::string& json_text, SiftConfig base) {
  auto cfg = overlay_sift(parse_text(json_text), "sift", base);
  cfg.validate();
  return cfg;
}

SiftConfig load_sift_config(const std::filesystem::path& path, SiftConfig base) {
  return parse_sift_config(read_file(path), base);
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  const json doc = {
      {"sift", sift_json(cfg.sift)},
      {"detector", detector_json(cfg.detector)},
      {"eval",
       {{"dsi_threshold", cfg.eval.dsi_threshold},
        {"fpi_ref", cfg.eval.fpi_ref},
        {"aufc_range", {cfg.eval.aufc_lo, cfg.eval.aufc_hi}}}},
      {"io",
       {{"manifest", cfg.io.manifest},
        {"out_dir", cfg.io.out_dir},
        {"detections_dir", cfg.io.detections_dir.empty() ? json(nullptr) : json(cfg.io.detections_dir)},
        {"role", cfg.io.role}}},
  };
  return doc.dump(2);
}

std::string sift_config_to_json(const SiftConfig& cfg) {
  return sift_json(cfg).dump(2);
}

std::string detector_params_to_json(const DetectorParams& params) {
  return detector_json(params).dump(2);
}

}  // namespace mmsift

#include <doctest.h>

#include <json.hpp>

#include "mmsift/config.hpp"
#include "mmsift/error.hpp"
#include "support.hpp"

using namespace mmsift;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::Io;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("empty document keeps every default") {
  const PipelineConfig cfg = parse_pipeline_config("{}");
  CHECK(cfg == PipelineConfig{});
  CHECK(cfg.sift.num_orientations == 18);
  CHECK(cfg.sift.num_scales == 2);
  CHECK(cfg.detector.quantile_q == 0.99);
  CHECK(cfg.eval.dsi_threshold == 0.2);
  CHECK(cfg.eval.fpi_ref == 0.9);
  CHECK(cfg.eval.aufc_lo == 0.0);
  CHECK(cfg.eval.aufc_hi == 5.0);
  CHECK(cfg.io.role == "test");
  CHECK(cfg.pixel_size_from_manifest);
}

TEST_CASE("sections overlay only the keys they name") {
  const PipelineConfig cfg = parse_pipeline_config(R"({
    "sift": {"num_orientations": 6},
    "detector": {"quantile_q": 0.95, "nms_iou": 0.3},
    "eval": {"fpi_ref": 1.5, "aufc_range": [0, 2]},
    "io": {"manifest": "m.json", "role": "validation"}})");
  CHECK(cfg.sift.num_orientations == 6);
  CHECK(cfg.sift.num_scales == 2);
  CHECK(cfg.detector.quantile_q == 0.95);
  CHECK(cfg.detector.nms_iou == 0.3);
  CHECK(cfg.detector.a_min_mm2 == 15.0);
  CHECK(cfg.eval.fpi_ref == 1.5);
  CHECK(cfg.eval.aufc_hi == 2.0);
  CHECK(cfg.eval.dsi_threshold == 0.2);
  CHECK(cfg.io.manifest == "m.json");
  CHECK(cfg.io.role == "validation");
  CHECK(cfg.pixel_size_from_manifest);
}

TEST_CASE("overlay starts from the given base") {
  PipelineConfig base;
  base.sift.num_scales = 3;
  const auto cfg = parse_pipeline_config(R"({"sift": {"num_orientations": 12}})", base);
  CHECK(cfg.sift.num_scales == 3);
  CHECK(cfg.sift.num_orientations == 12);
}

TEST_CASE("explicit pixel size switches off the manifest spacing") {
  const auto cfg = parse_pipeline_config(R"({"sift": {"pixel_size_mm": 0.05}})");
  CHECK(cfg.sift.pixel_size_mm == 0.05);
  CHECK_FALSE(cfg.pixel_size_from_manifest);
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(kind_of([] { parse_pipeline_config(R"({"sfit": {}})"); }) == ErrorKind::Format);
  CHECK(message_of([] { parse_pipeline_config(R"({"sfit": {}})"); }).find("sfit") != std::string::npos);
  CHECK(message_of([] { parse_pipeline_config(R"({"sift": {"orientations": 6}})"); }).find("sift.orientations") !=
        std::string::npos);
  CHECK(kind_of([] { parse_pipeline_config(R"({"detector": {"q": 0.9}})"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_pipeline_config(R"({"eval": {"fpi": 0.9}})"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_pipeline_config(R"({"io": {"output": "x"}})"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_sift_config(R"({"num_scale": 2})"); }) == ErrorKind::Format);
}

TEST_CASE("wrong types and malformed documents are Format errors") {
  CHECK(kind_of([] { parse_pipeline_config(R"({"sift": {"num_orientations": 6.5}})"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_pipeline_config(R"({"sift": {"a_min_mm2": "15"}})"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_pipeline_config(R"({"eval": {"aufc_range": [0]}})"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_pipeline_config(R"({"io": {"manifest": 3}})"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_pipeline_config(R"({"sift": []})"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_pipeline_config("[]"); }) == ErrorKind::Format);
  CHECK(kind_of([] { parse_pipeline_config("{"); }) == ErrorKind::Format);
}

TEST_CASE("values violating nested invariants are Validation errors") {
  CHECK(kind_of([] { parse_pipeline_config(R"({"sift": {"num_orientations": 0}})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { parse_pipeline_config(R"({"sift": {"a_max_mm2": 10}})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { parse_pipeline_config(R"({"detector": {"quantile_q": 1.0}})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { parse_pipeline_config(R"({"eval": {"aufc_range": [3, 1]}})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { parse_pipeline_config(R"({"eval": {"dsi_threshold": 0}})"); }) == ErrorKind::Validation);
  CHECK(kind_of([] { parse_pipeline_config(R"({"io": {"role": "holdout"}})"); }) == ErrorKind::Validation);
}

TEST_CASE("serialised config parses back to the same value") {
  PipelineConfig cfg;
  cfg.sift.num_orientations = 6;
  cfg.detector.nms_iou = 0.25;
  cfg.eval.aufc_hi = 3.0;
  cfg.io.manifest = "m.json";
  cfg.io.out_dir = "out";
  const auto text = pipeline_config_to_json(cfg);
  const json doc = json::parse(text);
  CHECK(doc["io"]["detections_dir"].is_null());
  CHECK(doc["eval"]["aufc_range"] == json::array({0.0, 3.0}));
  // pixel_size_mm is present, so the parsed copy pins it.
  auto back = parse_pipeline_config(text);
  CHECK_FALSE(back.pixel_size_from_manifest);
  back.pixel_size_from_manifest = true;
  CHECK(back == cfg);
  CHECK(parse_sift_config(sift_config_to_json(cfg.sift)) == cfg.sift);
}

TEST_CASE("config files: missing is Io, relative io paths anchor at the file") {
  testing::TempDir dir;
  CHECK(kind_of([&] { load_pipeline_config(dir / "absent.json"); }) == ErrorKind::Io);
  CHECK(kind_of([&] { load_sift_config(dir / "absent.json"); }) == ErrorKind::Io);

  std::filesystem::create_directories(dir / "cfg");
  testing::write_file(dir / "cfg" / "p.json",
                      R"({"io": {"manifest": "../data/m.json", "out_dir": "/abs/out"}, "sift": {"num_scales": 3}})");
  const auto cfg = load_pipeline_config(dir / "cfg" / "p.json");
  CHECK(cfg.io.manifest == (dir / "data" / "m.json").lexically_normal().string());
  CHECK(cfg.io.out_dir == "/abs/out");
  CHECK(cfg.io.detections_dir.empty());
  CHECK(cfg.sift.num_scales == 3);

  testing::write_file(dir / "s.json", R"({"num_orientations": 9})");
  CHECK(load_sift_config(dir / "s.json").num_orientations == 9);
}

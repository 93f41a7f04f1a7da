#include "mmsift/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace mmsift {

using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Format, path.string() + ": invalid JSON: " + e.what());
  }
}

fs::path with_suffix(const fs::path& prefix, const std::string& suffix) {
  return prefix.parent_path() / (prefix.filename().string() + suffix);
}

}  // namespace

void write_preprocess_products(const PreprocessResult& pre, const fs::path& dir, const std::string& stem) {
  save_gray16(pre.image, dir / (stem + "_pre.png"));
  save_mask(pre.breast_mask, dir / (stem + "_mask.png"));
  const auto& g = pre.geometry;
  const json side = {{"image", stem},
                     {"crop_offset", {pre.crop_offset.row, pre.crop_offset.col}},
                     {"crop_size", {g.crop_height, g.crop_width}},
                     {"padded_side", g.padded_side},
                     {"side", g.side},
                     {"effective_pixel_size_mm", pre.effective_pixel_size_mm}};
  write_text(dir / (stem + "_pre.json"), side.dump(2) + "\n");
}

GrayImage16 band_display(const GrayImage32& band, int num_orientations) {
  require(num_orientations >= 1, "num_orientations must be >= 1");
  GrayImage16 out(band.width(), band.height());
  const double n = num_orientations;
  for (std::size_t i = 0; i < band.size(); ++i) {
    const double v = std::floor(band.pixels()[i] / n + 0.5);
    out.pixels()[i] = static_cast<std::uint16_t>(std::min(v, 65535.0));
  }
  return out;
}

bool write_sift_products(const fs::path& prefix, const std::string& image, const GrayImage16& pre,
                         const BinaryMask& breast_mask, const SiftOutput& out, const std::string& mask_path) {
  const auto bands = compute_scale_bands(out.config);
  require(bands.size() == out.bands.size(), "sift output does not match its configuration");

  json band_list = json::array();
  for (std::size_t i = 0; i < out.bands.size(); ++i) {
    const std::string tag = "_band" + std::to_string(i + 1);
    save_gray16(band_display(out.bands[i], out.config.num_orientations), with_suffix(prefix, tag + ".png"));
    save_raw32(out.bands[i], with_suffix(prefix, tag + ".raw"));
    band_list.push_back({{"index", bands[i].index},
                         {"m1_px", bands[i].m1_px},
                         {"m2_px", bands[i].m2_px},
                         {"m1_rounded", bands[i].m1_rounded},
                         {"m2_rounded", bands[i].m2_rounded},
                         {"raw", with_suffix(prefix, tag + ".raw").filename().string()}});
  }

  const bool pcm = out.bands.size() == 2;
  if (pcm) save_rgb8(compose_pcm(pre, out, breast_mask), with_suffix(prefix, "_pcm.png"));

  const json doc = {{"image", image},
                    {"config", json::parse(sift_config_to_json(out.config))},
                    {"effective_pixel_size_mm", out.config.pixel_size_mm * out.config.resize_factor},
                    {"mask", mask_path.empty() ? json(nullptr) : json(mask_path)},
                    {"pcm", pcm},
                    {"bands", std::move(band_list)}};
  write_text(with_suffix(prefix, "_sift.json"), doc.dump(2) + "\n");
  return pcm;
}

SiftProducts load_sift_products(const fs::path& prefix) {
  const fs::path meta = with_suffix(prefix, "_sift.json");
  const json doc = read_json(meta);
  SiftProducts p;
  try {
    p.image = doc.at("image").get<std::string>();
    p.sift.config = parse_sift_config(doc.at("config").dump());
    p.effective_pixel_size_mm = doc.at("effective_pixel_size_mm").get<double>();
    if (!doc.at("mask").is_null()) p.mask = doc.at("mask").get<std::string>();
    for (const auto& b : doc.at("bands")) p.sift.bands.push_back(load_raw32(meta.parent_path() / b.at("raw").get<std::string>()));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, meta.string() + ": " + e.what());
  }
  require(p.sift.bands.size() == compute_scale_bands(p.sift.config).size(),
          meta.string() + ": band count does not match num_scales");
  for (const auto& b : p.sift.bands)
    require(b.same_shape(p.sift.bands.front()), meta.string() + ": bands differ in size");
  return p;
}

std::vector<ManifestEntry> images_with_role(const DatasetManifest& manifest, FoldRole role) {
  std::vector<ManifestEntry> out;
  std::set<fs::path> seen;
  std::map<std::string, fs::path> stems;
  for (const auto& e : manifest.entries) {
    if (e.fold_role != role || !seen.insert(e.image_path).second) continue;
    const auto [it, fresh] = stems.emplace(image_stem(e.image_path), e.image_path);
    require(fresh, "images " + it->second.string() + " and " + e.image_path.string() + " share the stem '" +
                       it->first + "'");
    out.push_back(e);
  }
  return out;
}

EvalReport evaluate_dataset(const DatasetManifest& manifest, FoldRole role, const fs::path& detections_dir,
                            const EvalConfig& cfg, const std::string& detector_label) {
  cfg.validate();
  const auto ids = manifest.split_ids();
  require(!ids.empty(), "manifest has no splits");
  std::vector<SplitReport> splits;
  for (int id : ids) {
    require(!manifest.select(id, role).empty(),
            "split " + std::to_string(id) + " has no " + to_string(role) + " images");
    splits.push_back(evaluate_split(manifest, id, role, detections_dir, cfg));
  }
  return aggregate(std::move(splits), cfg, detector_label);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::clamp<std::size_t>(jobs < 1 ? 1 : static_cast<std::size_t>(jobs), 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

template <class Fn>
void stage(PipelineRecord& record, const std::string& name, Fn&& fn) {
  record.stage = name;
  try {
    fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  } catch (const std::exception& e) {
    throw StageError(name, Error(ErrorKind::Io, e.what()));
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

void run_pipeline(const PipelineConfig& input_cfg, int jobs, PipelineRecord& record) {
  record.config = input_cfg;
  PipelineConfig& cfg = record.config;
  DatasetManifest manifest;
  FoldRole role = FoldRole::Test;
  std::vector<ManifestEntry> images;

  stage(record, "config", [&] {
    cfg.validate();
    require(!cfg.io.manifest.empty(), "no manifest given");
    require(!cfg.io.out_dir.empty(), "no output directory given");
    if (cfg.sift.resize_factor != kResizeFactor)
      fail(ErrorKind::Unsupported, "sift.resize_factor must be " + std::to_string(kResizeFactor) +
                                       " to match the preprocessing subsample");
    role = parse_fold_role(cfg.io.role);
  });

  stage(record, "manifest", [&] {
    record.inputs.push_back(cfg.io.manifest);
    manifest = load_manifest(cfg.io.manifest);
    if (cfg.pixel_size_from_manifest) {
      cfg.sift.pixel_size_mm = manifest.pixel_size_mm;
    } else if (cfg.sift.pixel_size_mm != manifest.pixel_size_mm) {
      fail(ErrorKind::Validation, "sift.pixel_size_mm " + std::to_string(cfg.sift.pixel_size_mm) +
                                      " disagrees with the manifest pixel_size_mm " +
                                      std::to_string(manifest.pixel_size_mm));
    }
    images = images_with_role(manifest, role);
    require(!images.empty(), std::string("manifest has no ") + to_string(role) + " images");
    for (const auto& e : images) {
      record.inputs.push_back(e.image_path);
      if (e.annotation_path) record.inputs.push_back(*e.annotation_path);
    }
  });

  const fs::path out(cfg.io.out_dir);
  const fs::path pre_dir = out / "pre", sift_dir = out / "sift";
  const bool internal = cfg.io.detections_dir.empty();
  const fs::path det_dir = internal ? out / "detections" : fs::path(cfg.io.detections_dir);
  if (!internal)
    for (const auto& e : images) record.inputs.push_back(det_dir / (image_stem(e.image_path) + ".json"));

  stage(record, "output", [&] {
    make_dir(pre_dir);
    make_dir(sift_dir);
    if (internal) make_dir(det_dir);
    record.outputs.push_back(pre_dir);
    record.outputs.push_back(sift_dir);
    if (internal) record.outputs.push_back(det_dir);
  });

  const std::size_t n = images.size();
  const int outer = std::clamp(jobs, 1, static_cast<int>(n));
  const int inner = std::max(1, jobs / outer);
  std::vector<PreprocessResult> pre(n);
  std::vector<SiftOutput> bands(n);

  stage(record, "preprocess", [&] {
    parallel_for(n, outer, [&](std::size_t i) {
      const auto stem = image_stem(images[i].image_path);
      pre[i] = preprocess(load_gray16(images[i].image_path, manifest.pixel_size_mm));
      write_preprocess_products(pre[i], pre_dir, stem);
    });
  });

  stage(record, "sift", [&] {
    parallel_for(n, outer, [&](std::size_t i) {
      const auto stem = image_stem(images[i].image_path);
      bands[i] = sift(pre[i].image, cfg.sift, inner);
      write_sift_products(sift_dir / stem, stem, pre[i].image, pre[i].breast_mask, bands[i],
                          (fs::path("..") / "pre" / (stem + "_mask.png")).string());
    });
  });

  if (internal) {
    stage(record, "detect", [&] {
      parallel_for(n, outer, [&](std::size_t i) {
        const auto stem = image_stem(images[i].image_path);
        const auto dets = blob_detect(bands[i], pre[i].breast_mask, cfg.detector, pre[i].effective_pixel_size_mm);
        write_detection_file(det_dir / (stem + ".json"), stem, dets);
      });
    });
  }

  stage(record, "evaluate", [&] {
    record.report = evaluate_dataset(manifest, role, det_dir, cfg.eval,
                                     internal ? kBaselineDetectorLabel : kImportedDetectorLabel);
  });

  stage(record, "report", [&] {
    emit_report(record.report, out);
    record.outputs.push_back(out / "report.json");
    for (const auto& s : record.report.splits)
      record.outputs.push_back(out / ("froc_split" + std::to_string(s.split_id) + ".csv"));
    record.outputs.push_back(out / "froc.svg");
  });
  record.stage = "done";
}

}  // namespace mmsift

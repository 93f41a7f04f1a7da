#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <random>
#include <thread>

#include "mmsift/config.hpp"
#include "mmsift/error.hpp"
#include "mmsift/imgdata.hpp"
#include "mmsift/morphology.hpp"
#include "mmsift/phantom.hpp"
#include "mmsift/pipeline.hpp"
#include "mmsift/version.hpp"
#include "run_record.hpp"

namespace mmsift::cli {

using nlohmann::json;

namespace {

int default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

void make_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

fs::path parent_or_cwd(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

int exit_code_for(ErrorKind kind) { return kind == ErrorKind::Io ? 2 : 1; }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Runs `body`, records the outcome and writes <record_dir>/run.json.
int execute(RunRecord& rec, const fs::path& record_dir, std::ostream& err, const std::function<void()>& body) {
  try {
    body();
    rec.ok = true;
  } catch (const StageError& e) {
    rec.stage = e.stage();
    rec.error_kind = e.kind();
    rec.error_message = e.what();
  } catch (const Error& e) {
    rec.error_kind = e.kind();
    rec.error_message = e.what();
  } catch (const std::exception& e) {
    rec.error_kind = ErrorKind::Io;
    rec.error_message = e.what();
  }
  rec.exit_code = rec.ok ? 0 : exit_code_for(*rec.error_kind);
  if (!rec.ok)
    err << "mmsift " << rec.command << ": " << to_string(*rec.error_kind) << " error in stage '" << rec.stage
        << "': " << rec.error_message << '\n';

  if (!record_dir.empty()) {
    try {
      make_dir(record_dir);
      write_run_record(rec, record_dir / "run.json");
    } catch (const Error& e) {
      err << "mmsift " << rec.command << ": cannot write run.json: " << e.what() << '\n';
      if (rec.ok) rec.exit_code = 2;
    }
  }
  return rec.exit_code;
}

void print_report(std::ostream& out, const EvalReport& report) {
  for (const auto& s : report.splits)
    out << "split " << s.split_id << ": images " << s.n_images << ", masses " << s.n_masses << ", TPR@"
        << fmt(report.config.fpi_ref, 2) << " FPI " << fmt(s.tpr_at_ref_fpi) << ", AUFC " << fmt(s.aufc)
        << ", mean DSI " << fmt(s.mean_dsi) << '\n';
  out << "TPR@" << fmt(report.config.fpi_ref, 2) << " FPI " << fmt(report.tpr_at_ref_fpi.mean) << " +/- "
      << fmt(report.tpr_at_ref_fpi.std) << ", AUFC " << fmt(report.aufc.mean) << " +/- " << fmt(report.aufc.std)
      << ", mean DSI " << fmt(report.mean_dsi.mean) << " +/- " << fmt(report.mean_dsi.std) << '\n';
  out << "detector: " << report.detector << '\n';
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string manifest, input, out_dir, role;
  double pixel_size = kDefaultPixelSizeMm;
  bool pixel_size_given = false;
};

void cmd_preprocess(const PreprocessArgs& a, RunRecord& rec, std::ostream& out) {
  std::vector<fs::path> images;
  double pixel = a.pixel_size;

  rec.stage = "input";
  if (!a.manifest.empty()) {
    rec.inputs.push_back(a.manifest);
    const auto manifest = load_manifest(a.manifest);
    if (!a.pixel_size_given) pixel = manifest.pixel_size_mm;
    std::map<std::string, fs::path> stems;
    for (const auto& e : manifest.entries) {
      if (!a.role.empty() && e.fold_role != parse_fold_role(a.role)) continue;
      const auto [it, fresh] = stems.emplace(image_stem(e.image_path), e.image_path);
      if (!fresh) {
        require(it->second == e.image_path, "images " + it->second.string() + " and " + e.image_path.string() +
                                                " share the stem '" + it->first + "'");
        continue;
      }
      images.push_back(e.image_path);
    }
    require(!images.empty(), "manifest lists no images" + (a.role.empty() ? std::string() : " with role " + a.role));
  } else {
    images.push_back(a.input);
  }
  require(pixel > 0.0, "pixel size must be positive");
  for (const auto& p : images) rec.inputs.push_back(p);
  rec.config_json = json{{"pixel_size_mm", pixel},
                         {"resize_factor", kResizeFactor},
                         {"role", a.role.empty() ? json(nullptr) : json(a.role)}}
                        .dump();

  rec.stage = "output";
  make_dir(a.out_dir);

  rec.stage = "preprocess";
  const fs::path dir(a.out_dir);
  parallel_for(images.size(), rec.jobs, [&](std::size_t i) {
    write_preprocess_products(preprocess(load_gray16(images[i], pixel)), dir, image_stem(images[i]));
  });
  for (const auto& p : images) {
    const auto stem = image_stem(p);
    for (const char* suffix : {"_pre.png", "_mask.png", "_pre.json"}) rec.outputs.push_back(dir / (stem + suffix));
  }
  out << "preprocessed " << images.size() << " image(s) into " << dir.string() << '\n';
}

// ---------------------------------------------------------------------------
// sift
// ---------------------------------------------------------------------------

struct SiftArgs {
  std::string input, mask, config, out_prefix;
};

void cmd_sift(const SiftArgs& a, RunRecord& rec, std::ostream& out, std::ostream& err) {
  rec.stage = "config";
  SiftConfig cfg;
  if (!a.config.empty()) {
    rec.inputs.push_back(a.config);
    cfg = load_sift_config(a.config);
  }
  cfg.validate();
  rec.config_json = sift_config_to_json(cfg);

  rec.stage = "input";
  rec.inputs.push_back(a.input);
  const GrayImage16 img = load_gray16(a.input, cfg.pixel_size_mm * cfg.resize_factor);
  BinaryMask mask(img.width(), img.height(), 1);
  std::string mask_ref;
  const fs::path prefix(a.out_prefix);
  const fs::path out_dir = parent_or_cwd(prefix);
  if (!a.mask.empty()) {
    rec.inputs.push_back(a.mask);
    mask = load_mask(a.mask);
    require(mask.same_shape(img), "mask " + a.mask + " does not match the image size");
    mask_ref = fs::proximate(fs::absolute(a.mask), fs::absolute(out_dir)).generic_string();
  }
  std::string image = image_stem(a.input);
  if (image.size() > 4 && image.ends_with("_pre")) image.resize(image.size() - 4);

  rec.stage = "output";
  make_dir(out_dir);

  rec.stage = "sift";
  const SiftOutput bands = sift(img, cfg, rec.jobs);
  const bool pcm = write_sift_products(prefix, image, img, mask, bands, mask_ref);
  const auto stem = prefix.filename().string();
  for (std::size_t i = 1; i <= bands.bands.size(); ++i) {
    rec.outputs.push_back(out_dir / (stem + "_band" + std::to_string(i) + ".png"));
    rec.outputs.push_back(out_dir / (stem + "_band" + std::to_string(i) + ".raw"));
  }
  if (pcm)
    rec.outputs.push_back(out_dir / (stem + "_pcm.png"));
  else
    err << "mmsift sift: warning: " << bands.bands.size() << " band(s); the pseudo-color image needs exactly 2\n";
  rec.outputs.push_back(out_dir / (stem + "_sift.json"));
  out << "sifted " << a.input << " into " << bands.bands.size() << " band(s)\n";
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string bands, out, mask;
  DetectorParams params;
};

void cmd_detect(const DetectArgs& a, RunRecord& rec, std::ostream& out) {
  rec.stage = "config";
  a.params.validate();

  rec.stage = "input";
  const fs::path prefix(a.bands);
  rec.inputs.push_back(fs::path(prefix.string() + "_sift.json"));
  const SiftProducts products = load_sift_products(prefix);
  const auto& shape = products.sift.bands.front();
  BinaryMask mask(shape.width(), shape.height(), 1);
  fs::path mask_path;
  if (!a.mask.empty())
    mask_path = a.mask;
  else if (!products.mask.empty())
    mask_path = parent_or_cwd(prefix) / products.mask;
  if (!mask_path.empty()) {
    rec.inputs.push_back(mask_path);
    mask = load_mask(mask_path);
    require(mask.same_shape(shape), "mask " + mask_path.string() + " does not match the band size");
  }
  rec.config_json = json{{"detector", json::parse(detector_params_to_json(a.params))},
                         {"effective_pixel_size_mm", products.effective_pixel_size_mm},
                         {"mask", mask_path.empty() ? json(nullptr) : json(mask_path.string())}}
                        .dump();

  rec.stage = "output";
  make_dir(parent_or_cwd(a.out));

  rec.stage = "detect";
  const auto dets = blob_detect(products.sift, mask, a.params, products.effective_pixel_size_mm);
  write_detection_file(a.out, products.image, dets);
  rec.outputs.push_back(a.out);
  out << dets.size() << " detection(s) written to " << a.out << '\n';
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string manifest, detections_dir, role, out_dir, config, label = kImportedDetectorLabel;
  double fpi_ref = 0.9, dsi_threshold = 0.2;
  std::vector<double> aufc_range;
  CLI::Option *fpi_opt = nullptr, *dsi_opt = nullptr;
};

void cmd_evaluate(const EvalArgs& a, RunRecord& rec, std::ostream& out) {
  rec.stage = "config";
  PipelineConfig cfg;
  if (!a.config.empty()) {
    rec.inputs.push_back(a.config);
    cfg = load_pipeline_config(a.config);
  }
  if (!a.manifest.empty()) cfg.io.manifest = a.manifest;
  if (!a.detections_dir.empty()) cfg.io.detections_dir = a.detections_dir;
  if (!a.role.empty()) cfg.io.role = a.role;
  if (!a.out_dir.empty()) cfg.io.out_dir = a.out_dir;
  if (a.fpi_opt->count() > 0) cfg.eval.fpi_ref = a.fpi_ref;
  if (a.dsi_opt->count() > 0) cfg.eval.dsi_threshold = a.dsi_threshold;
  if (a.aufc_range.size() == 2) {
    cfg.eval.aufc_lo = a.aufc_range[0];
    cfg.eval.aufc_hi = a.aufc_range[1];
  }
  cfg.eval.validate();
  require(!cfg.io.manifest.empty(), "no manifest given");
  require(!cfg.io.detections_dir.empty(), "no detections directory given");
  require(!cfg.io.out_dir.empty(), "no output directory given");
  const FoldRole role = parse_fold_role(cfg.io.role);
  rec.config_json = json{{"eval", json::parse(pipeline_config_to_json(cfg)).at("eval")},
                         {"io", json::parse(pipeline_config_to_json(cfg)).at("io")},
                         {"detector_label", a.label}}
                        .dump();

  rec.stage = "manifest";
  rec.inputs.push_back(cfg.io.manifest);
  const auto manifest = load_manifest(cfg.io.manifest);
  for (const auto& e : images_with_role(manifest, role)) {
    rec.inputs.push_back(e.image_path);
    if (e.annotation_path) rec.inputs.push_back(*e.annotation_path);
    rec.inputs.push_back(fs::path(cfg.io.detections_dir) / (image_stem(e.image_path) + ".json"));
  }

  rec.stage = "output";
  make_dir(cfg.io.out_dir);

  rec.stage = "evaluate";
  const EvalReport report = evaluate_dataset(manifest, role, cfg.io.detections_dir, cfg.eval, a.label);

  rec.stage = "report";
  const fs::path dir(cfg.io.out_dir);
  emit_report(report, dir);
  rec.outputs.push_back(dir / "report.json");
  for (const auto& s : report.splits) rec.outputs.push_back(dir / ("froc_split" + std::to_string(s.split_id) + ".csv"));
  rec.outputs.push_back(dir / "froc.svg");
  print_report(out, report);
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct PipelineArgs {
  std::string manifest, out_dir, config, detections_dir, role;
};

void cmd_pipeline(const PipelineArgs& a, RunRecord& rec, std::ostream& out) {
  PipelineRecord pr;
  rec.stage = "config";
  PipelineConfig cfg;
  try {
    if (!a.config.empty()) {
      rec.inputs.push_back(a.config);
      cfg = load_pipeline_config(a.config);
    }
  } catch (const Error& e) {
    throw StageError("config", e);
  }
  if (!a.manifest.empty()) cfg.io.manifest = a.manifest;
  if (!a.out_dir.empty()) cfg.io.out_dir = a.out_dir;
  if (!a.detections_dir.empty()) cfg.io.detections_dir = a.detections_dir;
  if (!a.role.empty()) cfg.io.role = a.role;
  rec.config_json = pipeline_config_to_json(cfg);

  auto sync = [&] {
    rec.config_json = pipeline_config_to_json(pr.config);
    rec.stage = pr.stage;
    rec.inputs.insert(rec.inputs.end(), pr.inputs.begin(), pr.inputs.end());
    rec.outputs = pr.outputs;
  };
  try {
    run_pipeline(cfg, rec.jobs, pr);
  } catch (...) {
    sync();
    throw;
  }
  sync();
  print_report(out, pr.report);
}

// ---------------------------------------------------------------------------
// morph-selftest
// ---------------------------------------------------------------------------

struct SelftestArgs {
  int images = 100;
  int size = 32;
  std::uint64_t seed = 1;
  std::vector<int> lengths = {3, 9, 15};
  int orientations = 18;
  std::string out_dir;
};

void cmd_selftest(const SelftestArgs& a, RunRecord& rec, std::ostream& out) {
  rec.stage = "config";
  require(a.images >= 1 && a.size >= 1 && a.orientations >= 1 && !a.lengths.empty(),
          "selftest sizes must be positive");
  for (int len : a.lengths) require(len >= 1, "SE lengths must be >= 1");
  rec.config_json = json{{"images", a.images},
                         {"size", a.size},
                         {"seed", a.seed},
                         {"lengths", a.lengths},
                         {"orientations", a.orientations}}
                        .dump();

  rec.stage = "selftest";
  std::mt19937_64 rng(a.seed);
  std::vector<GrayImage16> imgs;
  for (int k = 0; k < a.images; ++k) {
    GrayImage16 img(a.size, a.size);
    for (auto& v : img.pixels()) v = static_cast<std::uint16_t>(rng() >> 48);
    imgs.push_back(std::move(img));
  }

  long long total = 0, passed = 0, bad_pixels = 0;
  for (int len : a.lengths) {
    long long len_total = 0, len_passed = 0;
    for (int n = 0; n < a.orientations; ++n) {
      const LineSE se = make_line_se(len, orientation_deg(n, a.orientations));
      for (const auto& img : imgs) {
        const auto fast = open_line(img, se);
        const auto slow = naive::open_line(img, se);
        long long diff = 0;
        for (std::size_t i = 0; i < fast.size(); ++i) diff += fast.pixels()[i] != slow.pixels()[i];
        bad_pixels += diff;
        ++len_total;
        len_passed += diff == 0;
      }
    }
    out << "length " << len << ": " << len_passed << "/" << len_total << " cases bit-identical\n";
    total += len_total;
    passed += len_passed;
  }
  out << "morph-selftest: " << passed << "/" << total << " passed, " << total - passed << " failed, " << bad_pixels
      << " mismatching pixels\n";
  if (passed != total) fail(ErrorKind::Validation, "fast opening disagrees with the naive composition");
}

// ---------------------------------------------------------------------------
// make-phantoms
// ---------------------------------------------------------------------------

void cmd_make_phantoms(const std::string& dir, RunRecord& rec, std::ostream& out) {
  rec.stage = "phantoms";
  rec.config_json = json{{"pixel_size_mm", kDefaultPixelSizeMm}}.dump();
  write_phantom_dataset(dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().filename() != "run.json") rec.outputs.push_back(entry.path());
  std::sort(rec.outputs.begin(), rec.outputs.end());
  out << "phantom dataset written to " << dir << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pseudo-color mammogram generation by multi-scale morphological sifting, with a baseline detector "
               "and an FROC evaluation harness.",
               "mmsift"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  int jobs = default_jobs();
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  };

  PreprocessArgs pa;
  auto* pre = app.add_subcommand("preprocess", "Breast segmentation, crop, normalization and 4x wavelet subsampling");
  auto* pre_manifest = pre->add_option("--manifest", pa.manifest, "Dataset manifest (JSON)");
  auto* pre_in = pre->add_option("--in", pa.input, "Single input image (16-bit PNG)");
  pre_manifest->excludes(pre_in);
  pre->add_option("--out-dir", pa.out_dir, "Output directory")->required();
  auto* pre_px = pre->add_option("--pixel-size", pa.pixel_size, "Input pixel size in mm (default: manifest, else 0.07)");
  pre->add_option("--role", pa.role, "Only images with this role (train, validation, test)");
  add_jobs(pre);

  SiftArgs sa;
  auto* sft = app.add_subcommand("sift", "Multi-scale morphological sifting and pseudo-color composition");
  sft->add_option("--in", sa.input, "Preprocessed image (16-bit PNG)")->required();
  sft->add_option("--mask", sa.mask, "Breast mask PNG used to scale the pseudo-color channels");
  sft->add_option("--config", sa.config, "SiftConfig JSON");
  sft->add_option("--out-prefix", sa.out_prefix, "Output path prefix")->required();
  add_jobs(sft);

  DetectArgs da;
  auto* det = app.add_subcommand("detect", "Baseline blob detector over sift bands");
  det->add_option("--bands", da.bands, "Prefix given to sift --out-prefix")->required();
  det->add_option("--out", da.out, "Detection JSON to write")->required();
  det->add_option("--quantile", da.params.quantile_q, "Per-band threshold quantile")->capture_default_str();
  det->add_option("--nms-iou", da.params.nms_iou, "Suppression IoU")->capture_default_str();
  det->add_option("--a-min", da.params.a_min_mm2, "Minimum candidate area in mm^2")->capture_default_str();
  det->add_option("--a-max", da.params.a_max_mm2, "Maximum candidate area in mm^2")->capture_default_str();
  det->add_option("--mask", da.mask, "Breast mask PNG (default: the one recorded by sift)");
  add_jobs(det);

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "FROC, TPR@FPI, AUFC and DSI over imported detections");
  ev->add_option("--manifest", ea.manifest, "Dataset manifest (JSON)");
  ev->add_option("--detections-dir", ea.detections_dir, "Directory of <stem>.json detection files");
  ev->add_option("--role", ea.role, "Role evaluated in each split (default test)");
  ea.fpi_opt = ev->add_option("--fpi-ref", ea.fpi_ref, "Reference FPI")->capture_default_str();
  ea.dsi_opt = ev->add_option("--dsi-threshold", ea.dsi_threshold, "Minimum DSI of a true positive")->capture_default_str();
  ev->add_option("--aufc-range", ea.aufc_range, "FPI range of the partial AUFC")->expected(2);
  ev->add_option("--out-dir", ea.out_dir, "Report directory");
  ev->add_option("--config", ea.config, "Pipeline config JSON (eval and io sections)");
  ev->add_option("--label", ea.label, "Detector name recorded in the report")->capture_default_str();
  add_jobs(ev);

  PipelineArgs pla;
  auto* pl = app.add_subcommand("pipeline", "preprocess, sift, detect and evaluate a whole manifest");
  pl->add_option("--manifest", pla.manifest, "Dataset manifest (JSON)");
  pl->add_option("--out-dir", pla.out_dir, "Output directory");
  pl->add_option("--config", pla.config, "Pipeline config JSON");
  pl->add_option("--detections-dir", pla.detections_dir, "Evaluate these detections instead of running the detector");
  pl->add_option("--role", pla.role, "Role evaluated in each split (default test)");
  add_jobs(pl);

  SelftestArgs ta;
  auto* st = app.add_subcommand("morph-selftest", "Fast line opening against the naive composition");
  st->add_option("--images", ta.images, "Random images")->capture_default_str();
  st->add_option("--size", ta.size, "Image side")->capture_default_str();
  st->add_option("--seed", ta.seed, "Random seed")->capture_default_str();
  st->add_option("--lengths", ta.lengths, "SE lengths")->capture_default_str();
  st->add_option("--orientations", ta.orientations, "Orientations over 180 degrees")->capture_default_str();
  st->add_option("--out-dir", ta.out_dir, "Directory for run.json");
  add_jobs(st);

  std::string phantom_dir;
  auto* ph = app.add_subcommand("make-phantoms", "Write the synthetic phantom dataset")->group("");
  ph->add_option("--out-dir", phantom_dir, "Output directory")->required();
  add_jobs(ph);

  std::vector<const char*> argv{"mmsift"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    const auto parsed = app.get_subcommands();
    err << '\n' << (parsed.empty() ? app.help() : parsed.front()->help());
    return 1;
  }
  pa.pixel_size_given = pre_px->count() > 0;
  if (pre->parsed() && pa.manifest.empty() && pa.input.empty()) {
    err << "mmsift preprocess: one of --manifest or --in is required\n\n" << pre->help();
    return 1;
  }

  RunRecord rec;
  rec.argv.assign(args.begin(), args.end());
  rec.jobs = jobs;

  if (pre->parsed()) {
    rec.command = "preprocess";
    return execute(rec, pa.out_dir, err, [&] { cmd_preprocess(pa, rec, out); });
  }
  if (sft->parsed()) {
    rec.command = "sift";
    return execute(rec, parent_or_cwd(sa.out_prefix), err, [&] { cmd_sift(sa, rec, out, err); });
  }
  if (det->parsed()) {
    rec.command = "detect";
    return execute(rec, parent_or_cwd(da.out), err, [&] { cmd_detect(da, rec, out); });
  }
  if (ev->parsed()) {
    rec.command = "evaluate";
    fs::path dir = ea.out_dir;
    if (dir.empty() && !ea.config.empty()) {
      try {
        dir = load_pipeline_config(ea.config).io.out_dir;
      } catch (const Error&) {
      }
    }
    return execute(rec, dir, err, [&] { cmd_evaluate(ea, rec, out); });
  }
  if (pl->parsed()) {
    rec.command = "pipeline";
    fs::path dir = pla.out_dir;
    if (dir.empty() && !pla.config.empty()) {
      try {
        dir = load_pipeline_config(pla.config).io.out_dir;
      } catch (const Error&) {
      }
    }
    return execute(rec, dir, err, [&] { cmd_pipeline(pla, rec, out); });
  }
  if (st->parsed()) {
    rec.command = "morph-selftest";
    return execute(rec, ta.out_dir, err, [&] { cmd_selftest(ta, rec, out); });
  }
  rec.command = "make-phantoms";
  return execute(rec, phantom_dir, err, [&] { cmd_make_phantoms(phantom_dir, rec, out); });
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace mmsift::cli

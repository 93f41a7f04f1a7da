#include "mmsift/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

namespace mmsift {

using nlohmann::json;

double dice(const BinaryMask& a, const BinaryMask& b) {
  require(a.same_shape(b), "dice: mask sizes differ (" + std::to_string(a.width()) + "x" +
                               std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                               std::to_string(b.height()) + ")");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.pixels()[i], y = b.pixels()[i];
    na += x;
    nb += y;
    both += x && y;
  }
  require(na + nb > 0, "dice: both masks are empty");
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

namespace {

std::vector<int> score_order(std::span<const Detection> dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruthMass> truths,
                             double dsi_threshold) {
  MatchResult out;
  std::vector<bool> claimed(truths.size(), false);
  for (int d : score_order(dets)) {
    int best = -1;
    double best_dsi = 0.0;
    for (std::size_t g = 0; g < truths.size(); ++g) {
      if (claimed[g]) continue;
      const double s = dice(dets[d].mask, truths[g].mask);
      if (s >= dsi_threshold && (best < 0 || s > best_dsi)) {
        best = static_cast<int>(g);
        best_dsi = s;
      }
    }
    if (best < 0) {
      out.fp_indices.push_back(d);
    } else {
      claimed[best] = true;
      out.tp_pairs.push_back({d, best, best_dsi});
    }
  }
  std::sort(out.fp_indices.begin(), out.fp_indices.end());
  for (std::size_t g = 0; g < truths.size(); ++g)
    if (!claimed[g]) out.fn_gt_indices.push_back(static_cast<int>(g));
  return out;
}

std::vector<SweepPoint> threshold_sweep(std::span<const ImageCase> cases, double dsi_threshold) {
  require(!cases.empty(), "FROC needs at least one image");
  std::size_t n_masses = 0;
  for (const auto& c : cases) n_masses += c.truths.size();
  require(n_masses > 0, "FROC needs at least one ground-truth mass");

  // Greedy matching decides each detection from higher-scored ones only, so
  // one full matching per image yields the outcome at every threshold.
  struct Outcome {
    double score;
    bool tp;
    double dsi;
  };
  std::vector<Outcome> outcomes;
  for (const auto& c : cases) {
    const MatchResult m = match_detections(c.detections, c.truths, dsi_threshold);
    for (const auto& p : m.tp_pairs) outcomes.push_back({c.detections[p.detection].score, true, p.dsi});
    for (int i : m.fp_indices) outcomes.push_back({c.detections[i].score, false, 0.0});
  }
  std::sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.score > b.score; });

  const double n_images = static_cast<double>(cases.size());
  std::vector<SweepPoint> sweep;
  SweepPoint p;
  p.threshold = std::numeric_limits<double>::infinity();
  sweep.push_back(p);
  double dsi_sum = 0.0;
  for (std::size_t i = 0; i < outcomes.size();) {
    const double t = outcomes[i].score;
    for (; i < outcomes.size() && outcomes[i].score == t; ++i) {
      if (outcomes[i].tp) {
        ++p.true_positives;
        dsi_sum += outcomes[i].dsi;
      } else {
        ++p.false_positives;
      }
    }
    p.threshold = t;
    p.fpi = static_cast<double>(p.false_positives) / n_images;
    p.tpr = static_cast<double>(p.true_positives) / static_cast<double>(n_masses);
    p.mean_dsi = p.true_positives ? dsi_sum / static_cast<double>(p.true_positives) : 0.0;
    sweep.push_back(p);
  }
  return sweep;
}

FrocCurve froc(std::span<const ImageCase> cases, double dsi_threshold) {
  FrocCurve curve;
  for (const auto& s : threshold_sweep(cases, dsi_threshold)) {
    if (!curve.points.empty() && curve.points.back().fpi == s.fpi) {
      curve.points.back().tpr = std::max(curve.points.back().tpr, s.tpr);
    } else {
      curve.points.push_back({s.fpi, s.tpr});
    }
  }
  return curve;
}

namespace {

// Breakpoints of the extended curve, starting at fpi 0.
std::vector<FrocPoint> extended(const FrocCurve& curve) {
  require(!curve.points.empty(), "FROC curve is empty");
  std::vector<FrocPoint> pts;
  if (curve.points.front().fpi > 0.0) pts.push_back({0.0, 0.0});
  pts.insert(pts.end(), curve.points.begin(), curve.points.end());
  return pts;
}

double interpolate(const std::vector<FrocPoint>& pts, double x) {
  if (x <= pts.front().fpi) return pts.front().tpr;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (x <= pts[i].fpi) {
      const auto& a = pts[i - 1];
      const auto& b = pts[i];
      return a.tpr + (x - a.fpi) / (b.fpi - a.fpi) * (b.tpr - a.tpr);
    }
  }
  return pts.back().tpr;
}

}  // namespace

double tpr_at_fpi(const FrocCurve& curve, double fpi_ref) {
  return interpolate(extended(curve), fpi_ref);
}

double partial_aufc(const FrocCurve& curve, double fpi_lo, double fpi_hi) {
  require(fpi_hi > fpi_lo, "partial AUFC needs fpi_hi > fpi_lo");
  require(fpi_lo >= 0.0, "partial AUFC needs fpi_lo >= 0");
  const auto pts = extended(curve);
  std::vector<double> xs{fpi_lo};
  for (const auto& p : pts)
    if (p.fpi > fpi_lo && p.fpi < fpi_hi) xs.push_back(p.fpi);
  xs.push_back(fpi_hi);
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    area += 0.5 * (xs[i] - xs[i - 1]) * (interpolate(pts, xs[i - 1]) + interpolate(pts, xs[i]));
  return area / (fpi_hi - fpi_lo);
}

void EvalConfig::validate() const {
  require(dsi_threshold > 0.0 && dsi_threshold <= 1.0, "eval.dsi_threshold must lie in (0, 1]");
  require(fpi_ref >= 0.0, "eval.fpi_ref must be >= 0");
  require(aufc_lo >= 0.0 && aufc_hi > aufc_lo, "eval.aufc_range must satisfy 0 <= lo < hi");
}

SplitReport evaluate_cases(int split_id, std::span<const ImageCase> cases, const EvalConfig& cfg) {
  cfg.validate();
  const auto sweep = threshold_sweep(cases, cfg.dsi_threshold);
  SplitReport r;
  r.split_id = split_id;
  r.curve = froc(cases, cfg.dsi_threshold);
  r.tpr_at_ref_fpi = tpr_at_fpi(r.curve, cfg.fpi_ref);
  r.aufc = partial_aufc(r.curve, cfg.aufc_lo, cfg.aufc_hi);
  r.n_images = static_cast<int>(cases.size());
  r.n_masses = 0;
  for (const auto& c : cases) r.n_masses += static_cast<int>(c.truths.size());

  const SweepPoint* op = &sweep.front();
  for (const auto& s : sweep)
    if (s.fpi <= cfg.fpi_ref) op = &s;
  r.mean_dsi = op->mean_dsi;
  r.operating_threshold = op->threshold;
  r.operating_fpi = op->fpi;
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  require(!values.empty(), "mean of an empty list");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

EvalReport aggregate(std::vector<SplitReport> splits, const EvalConfig& cfg, std::string detector) {
  require(!splits.empty(), "aggregate needs at least one split");
  EvalReport rep;
  rep.config = cfg;
  rep.detector = std::move(detector);
  rep.splits = std::move(splits);
  auto column = [&](double SplitReport::*field) {
    std::vector<double> v;
    for (const auto& s : rep.splits) v.push_back(s.*field);
    return mean_std(v);
  };
  rep.tpr_at_ref_fpi = column(&SplitReport::tpr_at_ref_fpi);
  rep.aufc = column(&SplitReport::aufc);
  rep.mean_dsi = column(&SplitReport::mean_dsi);
  return rep;
}

BinaryMask truth_to_working(const BinaryMask& full, const WorkingGeometry& g) {
  const int f = kResizeFactor;
  std::vector<int> votes(static_cast<std::size_t>(g.side) * g.side, 0);
  for (int r = 0; r < g.crop_height; ++r) {
    const int fr = g.crop_offset.row + r;
    if (fr < 0 || fr >= full.height()) continue;
    for (int c = 0; c < g.crop_width; ++c) {
      const int fc = g.crop_offset.col + c;
      if (fc < 0 || fc >= full.width() || !full(fr, fc)) continue;
      ++votes[static_cast<std::size_t>(r / f) * g.side + c / f];
    }
  }
  BinaryMask out(g.side, g.side);
  const int majority = (f * f + 1) / 2;
  for (std::size_t i = 0; i < votes.size(); ++i) out.pixels()[i] = votes[i] >= majority;
  if (!out.any())
    for (std::size_t i = 0; i < votes.size(); ++i) out.pixels()[i] = votes[i] > 0;
  return out;
}

std::vector<ImageCase> load_split_cases(const DatasetManifest& manifest, int split_id, FoldRole role,
                                        const std::filesystem::path& detections_dir) {
  const auto entries = manifest.select(split_id, role);
  std::vector<std::string> missing;
  for (const auto& e : entries) {
    const auto p = detections_dir / (image_stem(e.image_path) + ".json");
    if (!std::filesystem::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = "missing detection files for split " + std::to_string(split_id) + ":";
    for (const auto& m : missing) msg += "\n  " + m;
    fail(ErrorKind::Io, msg);
  }

  std::vector<ImageCase> cases;
  for (const auto& e : entries) {
    const GrayImage16 img = load_gray16(e.image_path, manifest.pixel_size_mm);
    const WorkingGeometry g = preprocess_geometry(img);
    const double eff = manifest.pixel_size_mm * kResizeFactor;

    ImageCase c;
    c.stem = image_stem(e.image_path);
    if (e.annotation_path) {
      for (const auto& mass : load_annotation(*e.annotation_path, img.width(), img.height(), manifest.pixel_size_mm))
        c.truths.push_back(make_mass(truth_to_working(mass.mask, g), eff));
    }
    c.detections = import_detections(detections_dir / (c.stem + ".json"), g.side, g.side);
    cases.push_back(std::move(c));
  }
  return cases;
}

SplitReport evaluate_split(const DatasetManifest& manifest, int split_id, FoldRole role,
                           const std::filesystem::path& detections_dir, const EvalConfig& cfg) {
  const auto cases = load_split_cases(manifest, split_id, role, detections_dir);
  return evaluate_cases(split_id, cases, cfg);
}

namespace {

json finite_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

double from_finite_or_null(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json to_json(const MeanStd& m) {
  return {{"mean", m.mean}, {"std", m.std}};
}

MeanStd mean_std_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>()};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json splits = json::array();
  for (const auto& s : report.splits) {
    json curve = json::array();
    for (const auto& p : s.curve.points) curve.push_back({p.fpi, p.tpr});
    splits.push_back({{"split_id", s.split_id},
                      {"tpr_at_ref_fpi", s.tpr_at_ref_fpi},
                      {"aufc", s.aufc},
                      {"mean_dsi", s.mean_dsi},
                      {"n_images", s.n_images},
                      {"n_masses", s.n_masses},
                      {"operating_threshold", finite_or_null(s.operating_threshold)},
                      {"operating_fpi", s.operating_fpi},
                      {"froc", std::move(curve)}});
  }
  const json doc = {
      {"protocol",
       {{"dsi_threshold", report.config.dsi_threshold},
        {"fpi_ref", report.config.fpi_ref},
        {"aufc_range", {report.config.aufc_lo, report.config.aufc_hi}},
        {"resolution", report.resolution},
        {"std", "population"}}},
      {"detector", report.detector},
      {"splits", std::move(splits)},
      {"aggregate",
       {{"tpr_at_ref_fpi", to_json(report.tpr_at_ref_fpi)},
        {"aufc", to_json(report.aufc)},
        {"mean_dsi", to_json(report.mean_dsi)}}},
  };
  return doc.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("invalid report JSON: ") + e.what());
  }
  try {
    EvalReport r;
    const auto& proto = doc.at("protocol");
    r.config.dsi_threshold = proto.at("dsi_threshold").get<double>();
    r.config.fpi_ref = proto.at("fpi_ref").get<double>();
    r.config.aufc_lo = proto.at("aufc_range").at(0).get<double>();
    r.config.aufc_hi = proto.at("aufc_range").at(1).get<double>();
    r.resolution = proto.at("resolution").get<std::string>();
    r.detector = doc.at("detector").get<std::string>();
    for (const auto& s : doc.at("splits")) {
      SplitReport sr;
      sr.split_id = s.at("split_id").get<int>();
      sr.tpr_at_ref_fpi = s.at("tpr_at_ref_fpi").get<double>();
      sr.aufc = s.at("aufc").get<double>();
      sr.mean_dsi = s.at("mean_dsi").get<double>();
      sr.n_images = s.at("n_images").get<int>();
      sr.n_masses = s.at("n_masses").get<int>();
      sr.operating_threshold = from_finite_or_null(s.at("operating_threshold"));
      sr.operating_fpi = s.at("operating_fpi").get<double>();
      for (const auto& p : s.at("froc")) sr.curve.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      r.splits.push_back(std::move(sr));
    }
    const auto& agg = doc.at("aggregate");
    r.tpr_at_ref_fpi = mean_std_from(agg.at("tpr_at_ref_fpi"));
    r.aufc = mean_std_from(agg.at("aufc"));
    r.mean_dsi = mean_std_from(agg.at("mean_dsi"));
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed report JSON: ") + e.what());
  }
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string curve_to_csv(const FrocCurve& curve) {
  std::string out = "fpi,tpr\n";
  for (const auto& p : curve.points) out += fmt("%.10g", p.fpi) + "," + fmt("%.10g", p.tpr) + "\n";
  return out;
}

std::string froc_svg(const EvalReport& report) {
  constexpr double kW = 640, kH = 480, kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;
  const double x_max = report.config.aufc_hi;
  auto sx = [&](double fpi) { return fmt("%.2f", kLeft + std::min(fpi, x_max) / x_max * (kW - kLeft - kRight)); };
  auto sy = [&](double tpr) { return fmt("%.2f", kH - kBottom - tpr * (kH - kTop - kBottom)); };
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n"
      << "<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(x_max) << "\" y2=\"" << sy(0) << "\"/>\n"
      << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(0) << "\" y2=\"" << sy(1) << "\"/>\n"
      << "</g>\n"
      << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = x_max * i / 5.0, ty = i / 5.0;
    svg << "<text x=\"" << sx(fx) << "\" y=\"" << fmt("%.2f", kH - kBottom + 16) << "\" text-anchor=\"middle\">"
        << fmt("%g", fx) << "</text>\n";
    svg << "<text x=\"" << fmt("%.2f", kLeft - 6) << "\" y=\"" << sy(ty) << "\" text-anchor=\"end\">" << fmt("%g", ty)
        << "</text>\n";
  }
  svg << "<text x=\"" << fmt("%.2f", (kLeft + kW - kRight) / 2) << "\" y=\"" << fmt("%.2f", kH - 12)
      << "\" text-anchor=\"middle\">False positives per image</text>\n"
      << "<text x=\"16\" y=\"" << fmt("%.2f", (kTop + kH - kBottom) / 2)
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << fmt("%.2f", (kTop + kH - kBottom) / 2)
      << ")\">True positive rate</text>\n"
      << "</g>\n";

  for (std::size_t k = 0; k < report.splits.size(); ++k) {
    const auto& s = report.splits[k];
    const char* color = kColors[k % std::size(kColors)];
    std::vector<FrocPoint> pts;
    if (s.curve.points.empty() || s.curve.points.front().fpi > 0.0) pts.push_back({0.0, 0.0});
    for (const auto& p : s.curve.points)
      if (p.fpi < x_max) pts.push_back(p);
    pts.push_back({x_max, s.curve.points.empty() ? 0.0 : tpr_at_fpi(s.curve, x_max)});
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) svg << (i ? " " : "") << sx(pts[i].fpi) << "," << sy(pts[i].tpr);
    svg << "\"><title>split " << s.split_id << "</title></polyline>\n";
    svg << "<circle cx=\"" << sx(report.config.fpi_ref) << "\" cy=\"" << sy(s.tpr_at_ref_fpi)
        << "\" r=\"4\" fill=\"" << color << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "report.json", report_to_json(report));
  for (const auto& s : report.splits)
    write_text(out_dir / ("froc_split" + std::to_string(s.split_id) + ".csv"), curve_to_csv(s.curve));
  write_text(out_dir / "froc.svg", froc_svg(report));
}

}  // namespace mmsift

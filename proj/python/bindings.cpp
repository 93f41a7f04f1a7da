#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mmsift/config.hpp"
#include "mmsift/detection.hpp"
#include "mmsift/evaluation.hpp"
#include "mmsift/morphology.hpp"
#include "mmsift/phantom.hpp"
#include "mmsift/pipeline.hpp"
#include "mmsift/preprocess.hpp"
#include "mmsift/sifting.hpp"
#include "mmsift/version.hpp"

namespace py = pybind11;
using namespace mmsift;

namespace {

template <class T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <class R>
R to_raster(const Array<typename R::value_type>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  const auto* p = a.data();
  std::vector<typename R::value_type> px(p, p + a.size());
  return R(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), std::move(px));
}

GrayImage16 to_gray16(const Array<std::uint16_t>& a, double pixel_size_mm = kDefaultPixelSizeMm) {
  auto r = to_raster<Raster<std::uint16_t>>(a);
  return GrayImage16(r.width(), r.height(), std::vector<std::uint16_t>(r.pixels().begin(), r.pixels().end()),
                     pixel_size_mm);
}

BinaryMask to_mask(const Array<std::uint8_t>& a) {
  auto r = to_raster<Raster<std::uint8_t>>(a);
  BinaryMask m(r.width(), r.height());
  for (std::size_t i = 0; i < m.size(); ++i) m.pixels()[i] = r.pixels()[i] != 0;
  return m;
}

template <class R>
py::array to_numpy(const R& r) {
  using T = std::remove_const_t<typename decltype(r.pixels())::element_type>;
  py::array_t<T> out({r.height(), r.width()});
  std::copy(r.pixels().begin(), r.pixels().end(), out.mutable_data());
  return out;
}

py::array pcm_to_numpy(const PseudoColorImage& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, 3});
  auto* p = out.mutable_data();
  for (std::size_t i = 0; i < img.r.size(); ++i) {
    p[3 * i] = img.r[i];
    p[3 * i + 1] = img.g[i];
    p[3 * i + 2] = img.b[i];
  }
  return out;
}

SiftOutput to_sift_output(const std::vector<Array<std::uint32_t>>& bands, const SiftConfig& cfg) {
  SiftOutput out{{}, cfg};
  for (const auto& b : bands) out.bands.push_back(to_raster<GrayImage32>(b));
  return out;
}

FrocCurve to_curve(const std::vector<std::pair<double, double>>& points) {
  FrocCurve c;
  for (const auto& [fpi, tpr] : points) c.points.push_back({fpi, tpr});
  return c;
}

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-scale morphological sifting, pseudo-color mammograms and FROC evaluation";
  m.attr("__version__") = kVersion;

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
      if (e.kind() == ErrorKind::Io)
        PyErr_SetString(PyExc_OSError, msg.c_str());
      else
        PyErr_SetString(PyExc_ValueError, msg.c_str());
    }
  });

  py::class_<SiftConfig>(m, "SiftConfig")
      .def(py::init<>())
      .def_readwrite("a_min_mm2", &SiftConfig::a_min_mm2)
      .def_readwrite("a_max_mm2", &SiftConfig::a_max_mm2)
      .def_readwrite("num_scales", &SiftConfig::num_scales)
      .def_readwrite("num_orientations", &SiftConfig::num_orientations)
      .def_readwrite("pixel_size_mm", &SiftConfig::pixel_size_mm)
      .def_readwrite("resize_factor", &SiftConfig::resize_factor)
      .def("validate", &SiftConfig::validate)
      .def("__repr__", [](const SiftConfig& c) { return "SiftConfig(" + sift_config_to_json(c) + ")"; });

  py::class_<ScaleBand>(m, "ScaleBand")
      .def_readonly("index", &ScaleBand::index)
      .def_readonly("m1_px", &ScaleBand::m1_px)
      .def_readonly("m2_px", &ScaleBand::m2_px)
      .def_readonly("m1_rounded", &ScaleBand::m1_rounded)
      .def_readonly("m2_rounded", &ScaleBand::m2_rounded);

  py::class_<DetectorParams>(m, "DetectorParams")
      .def(py::init<>())
      .def_readwrite("quantile_q", &DetectorParams::quantile_q)
      .def_readwrite("a_min_mm2", &DetectorParams::a_min_mm2)
      .def_readwrite("a_max_mm2", &DetectorParams::a_max_mm2)
      .def_readwrite("nms_iou", &DetectorParams::nms_iou);

  m.def("compute_scale_bands", &compute_scale_bands, py::arg("config") = SiftConfig{},
        "Structuring element lengths (m1, m2) of every scale band, in working pixels.");
  m.def("round_to_odd", &round_to_odd);

  m.def(
      "open_line",
      [](const Array<std::uint16_t>& img, int length, double angle_deg, bool naive_path) {
        const auto se = make_line_se(length, angle_deg);
        const auto f = to_gray16(img);
        return to_numpy(naive_path ? naive::open_line(f, se) : open_line(f, se));
      },
      py::arg("image"), py::arg("length"), py::arg("angle_deg"), py::arg("naive") = false,
      "Grayscale opening with a digital line segment.");
  m.def(
      "line_offsets",
      [](int length, double angle_deg) {
        std::vector<std::pair<int, int>> out;
        for (const auto& o : make_line_se(length, angle_deg).offsets) out.emplace_back(o.dy, o.dx);
        return out;
      },
      py::arg("length"), py::arg("angle_deg"));

  m.def(
      "sift",
      [](const Array<std::uint16_t>& img, const SiftConfig& cfg, int jobs) {
        const auto f = to_gray16(img);
        SiftOutput out;
        {
          py::gil_scoped_release release;
          out = sift(f, cfg, jobs);
        }
        py::list bands;
        for (const auto& b : out.bands) bands.append(to_numpy(b));
        return bands;
      },
      py::arg("image"), py::arg("config") = SiftConfig{}, py::arg("jobs") = 1,
      "Multi-scale morphological sifting; one uint32 array per band.");

  m.def(
      "compose_pcm",
      [](const Array<std::uint16_t>& img, const std::vector<Array<std::uint32_t>>& bands,
         const Array<std::uint8_t>& mask, const SiftConfig& cfg) {
        return pcm_to_numpy(compose_pcm(to_gray16(img), to_sift_output(bands, cfg), to_mask(mask)));
      },
      py::arg("image"), py::arg("bands"), py::arg("breast_mask"), py::arg("config") = SiftConfig{},
      "Pseudo-color image (H, W, 3): gray, band 1, band 2.");

  m.def(
      "wavelet_downsample", [](const Array<std::uint16_t>& img) { return to_numpy(wavelet_downsample(to_gray16(img))); },
      py::arg("image"));

  m.def(
      "preprocess",
      [](const Array<std::uint16_t>& img, double pixel_size_mm) {
        const auto pre = preprocess(to_gray16(img, pixel_size_mm));
        py::dict d;
        d["image"] = to_numpy(pre.image);
        d["breast_mask"] = to_numpy(pre.breast_mask);
        d["crop_offset"] = py::make_tuple(pre.crop_offset.row, pre.crop_offset.col);
        d["effective_pixel_size_mm"] = pre.effective_pixel_size_mm;
        return d;
      },
      py::arg("image"), py::arg("pixel_size_mm") = kDefaultPixelSizeMm);

  m.def(
      "blob_detect",
      [](const std::vector<Array<std::uint32_t>>& bands, const Array<std::uint8_t>& mask,
         const DetectorParams& params, double effective_pixel_size_mm) {
        py::list out;
        for (const auto& d : blob_detect(to_sift_output(bands, SiftConfig{}), to_mask(mask), params,
                                         effective_pixel_size_mm)) {
          py::dict item;
          item["mask"] = to_numpy(d.mask);
          item["bbox"] = py::make_tuple(d.bbox.row0, d.bbox.col0, d.bbox.row1, d.bbox.col1);
          item["score"] = d.score;
          item["source_band"] = d.source_band ? py::cast(*d.source_band) : py::none();
          out.append(item);
        }
        return out;
      },
      py::arg("bands"), py::arg("breast_mask"), py::arg("params") = DetectorParams{},
      py::arg("effective_pixel_size_mm") = 0.28, "Baseline blob detector; detections sorted by score.");

  m.def(
      "dice", [](const Array<std::uint8_t>& a, const Array<std::uint8_t>& b) { return dice(to_mask(a), to_mask(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "tpr_at_fpi",
      [](const std::vector<std::pair<double, double>>& points, double fpi_ref) {
        return tpr_at_fpi(to_curve(points), fpi_ref);
      },
      py::arg("points"), py::arg("fpi_ref"), "Interpolated TPR of an FROC curve given as (fpi, tpr) points.");
  m.def(
      "partial_aufc",
      [](const std::vector<std::pair<double, double>>& points, double lo, double hi) {
        return partial_aufc(to_curve(points), lo, hi);
      },
      py::arg("points"), py::arg("fpi_lo") = 0.0, py::arg("fpi_hi") = 5.0);

  m.def(
      "run_pipeline",
      [](const std::string& manifest, const std::string& out_dir, const std::string& config_json,
         const std::string& detections_dir, int jobs) {
        PipelineConfig cfg = parse_pipeline_config(config_json);
        cfg.io.manifest = manifest;
        cfg.io.out_dir = out_dir;
        if (!detections_dir.empty()) cfg.io.detections_dir = detections_dir;
        PipelineRecord rec;
        {
          py::gil_scoped_release release;
          run_pipeline(cfg, jobs, rec);
        }
        return json_loads(report_to_json(rec.report));
      },
      py::arg("manifest"), py::arg("out_dir"), py::arg("config_json") = "{}", py::arg("detections_dir") = "",
      py::arg("jobs") = 1, "Runs the whole pipeline and returns report.json as a dict.");

  m.def(
      "write_phantom_dataset", [](const std::filesystem::path& dir) { write_phantom_dataset(dir); }, py::arg("dir"),
      "Writes the synthetic two-split phantom dataset.");
}

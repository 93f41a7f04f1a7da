#include "mmsift/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>

#include "mmsift/error.hpp"
#include "mmsift/imgdata.hpp"

namespace mmsift {

using nlohmann::json;

namespace {

struct Wave {
  double fy, fx, phase, amplitude;
};

// Low-frequency texture; raw engine output keeps it identical across
// standard libraries.
std::vector<Wave> texture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<Wave> waves;
  for (int k = 0; k < 6; ++k) {
    const double wavelength = 300.0 + 400.0 * unit();
    const double angle = std::numbers::pi * unit();
    waves.push_back({std::sin(angle) / wavelength, std::cos(angle) / wavelength, 2 * std::numbers::pi * unit(),
                     200.0 + 200.0 * unit()});
  }
  return waves;
}

}  // namespace

GrayImage16 render_phantom(const PhantomSpec& spec, double pixel_size_mm) {
  require(spec.width > 0 && spec.height > 0, "phantom size must be positive");
  GrayImage16 img(spec.width, spec.height, std::uint16_t{0}, pixel_size_mm);
  const auto waves = texture(spec.seed);
  const double cy = spec.height / 2.0, ay = 0.46 * spec.height, ax = 0.85 * spec.width;

  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      const double dy = (r + 0.5 - cy) / ay, dx = (c + 0.5) / ax;
      const double rho = std::sqrt(dy * dy + dx * dx);
      if (rho >= 1.0) continue;
      // Tissue thins smoothly to nothing at the skin line.
      const double t = std::min(1.0, (1.0 - rho) / 0.2);
      const double taper = t * t * (3 - 2 * t);
      double v = 12000.0;
      for (const auto& w : waves) v += w.amplitude * std::sin(2 * std::numbers::pi * (w.fy * r + w.fx * c) + w.phase);
      v *= taper;
      for (const auto& m : spec.masses) {
        const double dist = std::hypot(r - m.row, c - m.col);
        const double weight = std::clamp((m.diameter_px / 2 + 1 - dist) / 2, 0.0, 1.0);
        v += weight * m.contrast;
      }
      img(r, c) = static_cast<std::uint16_t>(std::clamp(std::floor(v + 0.5), 1.0, 65535.0));
    }
  }
  return img;
}

std::vector<std::pair<double, double>> mass_outline(const PhantomMass& mass, int vertices) {
  std::vector<std::pair<double, double>> pts;
  const double radius = mass.diameter_px / 2;
  for (int k = 0; k < vertices; ++k) {
    const double t = 2 * std::numbers::pi * k / vertices;
    pts.emplace_back(mass.col + 0.5 + radius * std::cos(t), mass.row + 0.5 + radius * std::sin(t));
  }
  return pts;
}

std::vector<PhantomSpec> phantom_dataset_specs() {
  constexpr int kW = 1600, kH = 2000;
  return {
      {"p01", kW, kH, 101, {{800, 520, 170, 24000}}},
      {"p02", kW, kH, 102, {{1150, 380, 190, 26000}}},
      {"p03", kW, kH, 103, {{950, 700, 200, 22000}}},
      {"p04", kW, kH, 104, {{700, 450, 150, 24000}}},
      {"p05", kW, kH, 105, {{1050, 600, 340, 14000}}},
      {"p06", kW, kH, 106, {}},
  };
}

void write_phantom_dataset(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  for (const auto& spec : phantom_dataset_specs()) {
    save_gray16(render_phantom(spec), dir / (spec.name + ".png"));
    if (spec.masses.empty()) continue;
    if (spec.name == "p05") {
      Gray8 labels(spec.width, spec.height);
      for (std::size_t k = 0; k < spec.masses.size(); ++k) {
        const auto& m = spec.masses[k];
        for (int r = 0; r < spec.height; ++r)
          for (int c = 0; c < spec.width; ++c)
            if (std::hypot(r - m.row, c - m.col) <= m.diameter_px / 2) labels(r, c) = static_cast<std::uint8_t>(k + 1);
      }
      save_gray8(labels, dir / (spec.name + "_mask.png"));
      continue;
    }
    json masses = json::array();
    for (const auto& m : spec.masses) {
      json poly = json::array();
      for (const auto& [x, y] : mass_outline(m)) poly.push_back({std::round(x * 100) / 100, std::round(y * 100) / 100});
      masses.push_back({{"polygon", std::move(poly)}});
    }
    std::ofstream out(dir / (spec.name + ".json"));
    out << json{{"masses", std::move(masses)}}.dump(1) << '\n';
    if (!out) fail(ErrorKind::Io, "failed writing " + (dir / (spec.name + ".json")).string());
  }

  auto entry = [](const std::string& name, const char* role) {
    json e = {{"image", name + ".png"}, {"role", role}};
    if (name == "p05")
      e["annotation"] = name + "_mask.png";
    else if (name != "p06")
      e["annotation"] = name + ".json";
    return e;
  };
  const json manifest = {
      {"pixel_size_mm", kDefaultPixelSizeMm},
      {"splits",
       {{{"id", 0},
         {"entries",
          {entry("p01", "test"), entry("p02", "test"), entry("p03", "test"), entry("p06", "test"),
           entry("p04", "train"), entry("p05", "train")}}},
        {{"id", 1},
         {"entries",
          {entry("p04", "test"), entry("p05", "test"), entry("p06", "test"), entry("p01", "train"),
           entry("p02", "train"), entry("p03", "train")}}}}}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "failed writing " + (dir / "manifest.json").string());
}

}  // namespace mmsift

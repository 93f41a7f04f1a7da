#include "mmsift/sifting.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

#include "mmsift/morphology.hpp"

namespace mmsift {

void SiftConfig::validate() const {
  require(a_min_mm2 > 0.0, "sift.a_min_mm2 must be positive");
  require(a_max_mm2 > a_min_mm2, "sift.a_max_mm2 must exceed sift.a_min_mm2");
  require(num_scales >= 1, "sift.num_scales must be >= 1");
  require(num_orientations >= 1, "sift.num_orientations must be >= 1");
  require(pixel_size_mm > 0.0, "sift.pixel_size_mm must be positive");
  require(resize_factor >= 1, "sift.resize_factor must be >= 1");
}

int round_to_odd(double x) {
  return 2 * static_cast<int>(std::floor(x / 2.0)) + 1;
}

std::vector<ScaleBand> compute_scale_bands(const SiftConfig& cfg) {
  cfg.validate();
  const double base = 2.0 / (cfg.pixel_size_mm * cfg.resize_factor) * std::sqrt(cfg.a_min_mm2 / std::numbers::pi);
  const double ratio = cfg.a_max_mm2 / cfg.a_min_mm2;
  const int n = cfg.num_scales;
  std::vector<ScaleBand> bands;
  for (int i = 1; i <= n; ++i) {
    ScaleBand b;
    b.index = i;
    b.m1_px = base * std::pow(ratio, 0.5 * (i - 1) / n);
    b.m2_px = base * std::pow(ratio, 0.5 * i / n);
    b.m1_rounded = round_to_odd(b.m1_px);
    b.m2_rounded = round_to_odd(b.m2_px);
    bands.push_back(b);
  }
  return bands;
}

double orientation_deg(int n, int num_orientations) {
  return n * 180.0 / num_orientations;
}

namespace {

void accumulate_orientation(const GrayImage16& img, const ScaleBand& band, double angle, GrayImage32& acc) {
  const GrayImage16 opened = open_line(img, make_line_se(band.m2_rounded, angle));
  GrayImage16 residue(img.width(), img.height(), 0, img.pixel_size_mm());
  for (std::size_t i = 0; i < img.size(); ++i)
    residue.pixels()[i] = static_cast<std::uint16_t>(img.pixels()[i] - opened.pixels()[i]);
  const GrayImage16 kept = open_line(residue, make_line_se(band.m1_rounded, angle));
  for (std::size_t i = 0; i < img.size(); ++i) acc.pixels()[i] += kept.pixels()[i];
}

}  // namespace

GrayImage32 mms_single_scale(const GrayImage16& img, const ScaleBand& band, int num_orientations, int jobs) {
  require(!img.empty(), "cannot sift an empty image");
  require(num_orientations >= 1, "num_orientations must be >= 1");
  const int workers = std::clamp(jobs, 1, num_orientations);

  std::vector<GrayImage32> partial(workers, GrayImage32(img.width(), img.height(), 0));
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](int w) {
    try {
      for (int n = next++; n < num_orientations; n = next++)
        accumulate_orientation(img, band, orientation_deg(n, num_orientations), partial[w]);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  GrayImage32 out = std::move(partial[0]);
  for (int w = 1; w < workers; ++w)
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] += partial[w].pixels()[i];
  return out;
}

SiftOutput sift(const GrayImage16& img, const SiftConfig& cfg, int jobs) {
  SiftOutput out;
  out.config = cfg;
  for (const auto& band : compute_scale_bands(cfg))
    out.bands.push_back(mms_single_scale(img, band, cfg.num_orientations, jobs));
  return out;
}

namespace {

template <typename Image>
Gray8 scale_impl(const Image& img, const std::optional<BinaryMask>& region) {
  require(!img.empty(), "cannot scale an empty image");
  if (region) require(img.same_shape(*region), "scaling region size differs from the image");

  bool seen = false;
  std::uint64_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (region && !region->pixels()[i]) continue;
    const std::uint64_t v = img.pixels()[i];
    lo = seen ? std::min(lo, v) : v;
    hi = seen ? std::max(hi, v) : v;
    seen = true;
  }
  require(seen, "scaling region is empty");

  Gray8 out(img.width(), img.height(), 0);
  const std::uint64_t range = hi - lo;
  if (range == 0) return out;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const std::uint64_t v = img.pixels()[i];
    if (v <= lo) continue;
    if (v >= hi) {
      out.pixels()[i] = 255;
      continue;
    }
    out.pixels()[i] = static_cast<std::uint8_t>((2 * 255 * (v - lo) + range) / (2 * range));
  }
  return out;
}

}  // namespace

Gray8 scale_to_8bit(const GrayImage32& img, const std::optional<BinaryMask>& region) {
  return scale_impl(img, region);
}

Gray8 scale_to_8bit(const GrayImage16& img, const std::optional<BinaryMask>& region) {
  return scale_impl(img, region);
}

PseudoColorImage compose_pcm(const GrayImage16& gm, const SiftOutput& bands, const BinaryMask& breast_mask) {
  if (bands.bands.size() != 2)
    fail(ErrorKind::Unsupported, "pseudo-color composition needs exactly 2 sift bands, got " +
                                     std::to_string(bands.bands.size()));
  require(gm.same_shape(breast_mask) && gm.same_shape(bands.bands[0]) && gm.same_shape(bands.bands[1]),
          "pseudo-color inputs differ in size");
  auto take = [](Gray8 g) {
    const auto px = g.pixels();
    return std::vector<std::uint8_t>(px.begin(), px.end());
  };
  PseudoColorImage pcm;
  pcm.width = gm.width();
  pcm.height = gm.height();
  pcm.r = take(scale_to_8bit(gm, breast_mask));
  pcm.g = take(scale_to_8bit(bands.bands[0], breast_mask));
  pcm.b = take(scale_to_8bit(bands.bands[1], breast_mask));
  return pcm;
}

}  // namespace mmsift

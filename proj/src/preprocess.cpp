#include "mmsift/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mmsift/components.hpp"

namespace mmsift {

std::uint16_t otsu_threshold(const GrayImage16& img) {
  if (img.empty()) fail(ErrorKind::Degenerate, "empty image has no foreground");
  std::vector<std::uint64_t> hist(65536, 0);
  for (auto v : img.pixels()) ++hist[v];

  const double total = static_cast<double>(img.size());
  double total_sum = 0.0;
  for (int v = 0; v < 65536; ++v) total_sum += static_cast<double>(v) * static_cast<double>(hist[v]);

  double n0 = 0.0, s0 = 0.0, best = -1.0;
  int best_t = -1;
  for (int t = 0; t < 65535; ++t) {
    n0 += static_cast<double>(hist[t]);
    s0 += static_cast<double>(t) * static_cast<double>(hist[t]);
    const double n1 = total - n0;
    if (n0 == 0.0 || n1 == 0.0) continue;
    const double diff = total * s0 - total_sum * n0;
    const double score = diff / n0 * diff / n1;
    if (score > best) {
      best = score;
      best_t = t;
    }
  }
  if (best_t < 0) fail(ErrorKind::Degenerate, "constant image: no foreground distinguishable from background");
  return static_cast<std::uint16_t>(best_t);
}

BinaryMask largest_component(const BinaryMask& mask) {
  const auto cc = label_components(mask, 8);
  if (cc.components.empty()) return BinaryMask(mask.width(), mask.height());
  int best = 0;
  for (std::size_t i = 1; i < cc.components.size(); ++i)
    if (cc.components[i].area > cc.components[best].area) best = static_cast<int>(i);
  return cc.mask_of(cc.components[best].label);
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const int w = mask.width(), h = mask.height();
  BinaryMask outside(w, h);
  std::vector<std::pair<int, int>> stack;
  auto seed = [&](int r, int c) {
    if (!mask(r, c) && !outside(r, c)) {
      outside(r, c) = 1;
      stack.emplace_back(r, c);
    }
  };
  for (int c = 0; c < w; ++c) {
    seed(0, c);
    seed(h - 1, c);
  }
  for (int r = 0; r < h; ++r) {
    seed(r, 0);
    seed(r, w - 1);
  }
  static constexpr int kDr[] = {-1, 1, 0, 0};
  static constexpr int kDc[] = {0, 0, -1, 1};
  while (!stack.empty()) {
    const auto [r, c] = stack.back();
    stack.pop_back();
    for (int k = 0; k < 4; ++k) {
      const int nr = r + kDr[k], nc = c + kDc[k];
      if (mask.contains(nr, nc)) seed(nr, nc);
    }
  }
  BinaryMask out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] = !outside.pixels()[i];
  return out;
}

BinaryMask extract_breast_region(const GrayImage16& img) {
  const std::uint16_t t = otsu_threshold(img);
  BinaryMask fg(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) fg.pixels()[i] = img.pixels()[i] > t;
  return fill_holes(largest_component(fg));
}

CropResult crop_to_mask(const GrayImage16& img, const BinaryMask& mask) {
  require(img.same_shape(mask), "crop mask size differs from the image");
  const BBox box = bounding_box(mask);
  require(!box.empty(), "crop mask is empty");
  GrayImage16 out = crop(img, box);
  out.set_pixel_size_mm(img.pixel_size_mm());
  return {std::move(out), {box.row0, box.col0}};
}

GrayImage16 normalize_16bit(const GrayImage16& img) {
  require(!img.empty(), "cannot normalize an empty image");
  const auto [lo_it, hi_it] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  const std::uint64_t lo = *lo_it, range = *hi_it - lo;
  GrayImage16 out(img.width(), img.height(), 0, img.pixel_size_mm());
  if (range == 0) return out;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const std::uint64_t d = img.pixels()[i] - lo;
    out.pixels()[i] = static_cast<std::uint16_t>((2 * d * 65535 + range) / (2 * range));
  }
  return out;
}

namespace {

template <typename Image>
Image pad_to_square(const Image& img, Image out) {
  for (int r = 0; r < img.height(); ++r) {
    const auto src = img.row(r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace

GrayImage16 pad_square(const GrayImage16& img) {
  const int side = std::max(img.width(), img.height());
  return pad_to_square(img, GrayImage16(side, side, 0, img.pixel_size_mm()));
}

BinaryMask pad_square(const BinaryMask& mask) {
  const int side = std::max(mask.width(), mask.height());
  return pad_to_square(mask, BinaryMask(side, side));
}

std::array<double, 4> db2_lowpass() {
  const double s3 = std::numbers::sqrt3;
  return {(1 + s3) / 8, (3 + s3) / 8, (3 - s3) / 8, (1 - s3) / 8};
}

namespace {

// y[j] = sum_k h[k] x[2j + k], with x[n + i] = x[n - 1 - i] past the end.
void lowpass_decimate(const double* x, std::ptrdiff_t xs, int n, double* y, std::ptrdiff_t ys) {
  const auto h = db2_lowpass();
  const int out_n = (n + 1) / 2;
  for (int j = 0; j < out_n; ++j) {
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      int i = 2 * j + k;
      if (i >= n) i = 2 * n - 1 - i;
      acc += h[k] * x[i * xs];
    }
    y[j * ys] = acc;
  }
}

// One separable level on a side x side block.
std::vector<double> lowpass_level(const std::vector<double>& in, int side) {
  const int half = (side + 1) / 2;
  std::vector<double> rows(static_cast<std::size_t>(side) * half);
  for (int r = 0; r < side; ++r)
    lowpass_decimate(in.data() + static_cast<std::ptrdiff_t>(r) * side, 1, side,
                     rows.data() + static_cast<std::ptrdiff_t>(r) * half, 1);
  std::vector<double> out(static_cast<std::size_t>(half) * half);
  for (int c = 0; c < half; ++c) lowpass_decimate(rows.data() + c, half, side, out.data() + c, half);
  return out;
}

}  // namespace

GrayImage16 wavelet_downsample(const GrayImage16& img) {
  require(img.width() == img.height(), "wavelet_downsample needs a square image");
  const int side = img.width();
  require(side >= 8, "wavelet_downsample needs side >= 8, got " + std::to_string(side));

  std::vector<double> level(img.pixels().begin(), img.pixels().end());
  level = lowpass_level(level, side);
  const int side1 = (side + 1) / 2;
  level = lowpass_level(level, side1);
  const int side2 = (side1 + 1) / 2;

  GrayImage16 out(side2, side2, 0, img.pixel_size_mm() * kResizeFactor);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::floor(level[i] + 0.5);
    out.pixels()[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  return out;
}

BinaryMask decimate_or(const BinaryMask& mask, int factor, int out_width, int out_height) {
  require(factor >= 1, "decimation factor must be positive");
  BinaryMask out(out_width, out_height);
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c)) continue;
      const int orow = r / factor, ocol = c / factor;
      if (out.contains(orow, ocol)) out(orow, ocol) = 1;
    }
  }
  return out;
}

int subsampled_side(int side) {
  return ((side + 1) / 2 + 1) / 2;
}

WorkingGeometry geometry_of(const BinaryMask& breast_region) {
  const BBox box = bounding_box(breast_region);
  require(!box.empty(), "breast region is empty");
  WorkingGeometry g;
  g.crop_offset = {box.row0, box.col0};
  g.crop_height = box.height();
  g.crop_width = box.width();
  g.padded_side = std::max(g.crop_height, g.crop_width);
  g.side = subsampled_side(g.padded_side);
  return g;
}

WorkingGeometry preprocess_geometry(const GrayImage16& img) {
  return geometry_of(extract_breast_region(img));
}

PreprocessResult preprocess(const GrayImage16& img) {
  const BinaryMask region = extract_breast_region(img);
  const WorkingGeometry geometry = geometry_of(region);
  auto [cropped, offset] = crop_to_mask(img, region);
  const BinaryMask region_crop = crop(region, bounding_box(region));
  const GrayImage16 square = pad_square(normalize_16bit(cropped));

  PreprocessResult out;
  out.image = wavelet_downsample(square);
  out.breast_mask =
      decimate_or(pad_square(region_crop), kResizeFactor, out.image.width(), out.image.height());
  out.crop_offset = offset;
  out.geometry = geometry;
  out.effective_pixel_size_mm = img.pixel_size_mm() * kResizeFactor;
  out.image.set_pixel_size_mm(out.effective_pixel_size_mm);
  return out;
}

}  // namespace mmsift

#pragma once

#include <vector>

#include "mmsift/raster.hpp"

namespace mmsift {

/// Integer pixel displacement; dy grows downward (image rows).
struct Offset {
  int dy = 0;
  int dx = 0;

  friend bool operator==(const Offset&, const Offset&) = default;
  friend auto operator<=>(const Offset&, const Offset&) = default;
  Offset operator+(Offset o) const noexcept { return {dy + o.dy, dx + o.dx}; }
  Offset operator-(Offset o) const noexcept { return {dy - o.dy, dx - o.dx}; }
  Offset operator-() const noexcept { return {-dy, -dx}; }
  Offset operator*(int k) const noexcept { return {dy * k, dx * k}; }
};

/// Digital line segment structuring element, centred on (0,0).
///
/// `offsets` is ordered end to end along the line, so consecutive entries
/// differ by one of at most two unit steps (an axis step and a diagonal step).
/// The set is point-symmetric: o is present iff -o is.
struct LineSE {
  int length_px = 1;
  double angle_deg = 0.0;
  std::vector<Offset> offsets;
};

/// Bresenham trace from the origin in direction (cos a, -sin a), (length-1)/2
/// unit steps along the dominant axis on each side. Even lengths round up to
/// the next odd value; angles are taken modulo 180.
///
/// The minor-axis displacement after k major steps is round(k * t) where t is
/// the slope quantised to a fraction with an odd denominator, so the trace
/// never hits a rounding tie and is reproducible across platforms.
LineSE make_line_se(int length_px, double angle_deg);

/// out(p) = min over o in se of img(p + o); out-of-bounds samples are ignored.
GrayImage16 erode_line(const GrayImage16& img, const LineSE& se);

/// out(p) = max over o in se of img(p - o); out-of-bounds samples are ignored.
GrayImage16 dilate_line(const GrayImage16& img, const LineSE& se);

/// dilate_line(erode_line(img, se), se), computed with running extrema along
/// periodic traversals. Cost per pixel grows with log(length), not length.
GrayImage16 open_line(const GrayImage16& img, const LineSE& se);

/// Brute-force reference implementations: one loop over every offset for
/// every pixel. Used as the oracle for the fast path.
namespace naive {
GrayImage16 erode_line(const GrayImage16& img, const LineSE& se);
GrayImage16 dilate_line(const GrayImage16& img, const LineSE& se);
GrayImage16 open_line(const GrayImage16& img, const LineSE& se);
}  // namespace naive

}  // namespace mmsift

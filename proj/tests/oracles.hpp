#pragma once

// Independent reference implementations, written from the definitions and
// sharing no code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "mmsift/detection.hpp"
#include "mmsift/evaluation.hpp"
#include "mmsift/morphology.hpp"
#include "mmsift/raster.hpp"
#include "support.hpp"

namespace mmsift::testing {

// Direct 2-D oracle: y[i][j] = sum_{a,b} h[a] h[b] x[2i+a][2j+b], with the
// signal mirrored about its last sample edge (x[n+k] = x[n-1-k]).
inline std::vector<double> oracle_level(const std::vector<double>& x, int n) {
  const double s3 = std::sqrt(3.0);
  const double h[4] = {(1 + s3) / 8, (3 + s3) / 8, (3 - s3) / 8, (1 - s3) / 8};
  auto at = [&](int r, int c) {
    if (r >= n) r = 2 * n - 1 - r;
    if (c >= n) c = 2 * n - 1 - c;
    return x[static_cast<std::size_t>(r) * n + c];
  };
  const int m = (n + 1) / 2;
  std::vector<double> y(static_cast<std::size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) y[static_cast<std::size_t>(i) * m + j] += h[a] * h[b] * at(2 * i + a, 2 * j + b);
  return y;
}

inline GrayImage16 oracle_downsample(const GrayImage16& img) {
  const int n = img.width();
  std::vector<double> x(img.pixels().begin(), img.pixels().end());
  const auto l1 = oracle_level(x, n);
  const int n1 = (n + 1) / 2;
  const auto l2 = oracle_level(l1, n1);
  const int n2 = (n1 + 1) / 2;
  GrayImage16 out(n2, n2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.pixels()[i] = static_cast<std::uint16_t>(std::clamp(std::round(l2[i]), 0.0, 65535.0));
  return out;
}

// Per-pixel min then max over the SE, skipping samples outside the image.
inline GrayImage16 brute_open(const GrayImage16& f, const std::vector<Offset>& se) {
  const int w = f.width(), h = f.height();
  GrayImage16 e(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      int v = 65535;
      for (const auto& o : se)
        if (f.contains(r + o.dy, c + o.dx)) v = std::min<int>(v, f(r + o.dy, c + o.dx));
      e(r, c) = static_cast<std::uint16_t>(v);
    }
  GrayImage16 d(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      int v = 0;
      for (const auto& o : se)
        if (e.contains(r - o.dy, c - o.dx)) v = std::max<int>(v, e(r - o.dy, c - o.dx));
      d(r, c) = static_cast<std::uint16_t>(v);
    }
  return d;
}

// Direct evaluation of the sifting sum for one band.
inline GrayImage32 brute_mms(const GrayImage16& f, int m1, int m2, int n_orient) {
  GrayImage32 acc(f.width(), f.height(), 0);
  for (int n = 0; n < n_orient; ++n) {
    const double angle = n * 180.0 / n_orient;
    const auto big = brute_open(f, make_line_se(m2, angle).offsets);
    GrayImage16 residue(f.width(), f.height());
    for (std::size_t i = 0; i < f.size(); ++i)
      residue.pixels()[i] = static_cast<std::uint16_t>(f.pixels()[i] - big.pixels()[i]);
    const auto kept = brute_open(residue, make_line_se(m1, angle).offsets);
    for (std::size_t i = 0; i < f.size(); ++i) acc.pixels()[i] += kept.pixels()[i];
  }
  return acc;
}

inline BinaryMask rect(int w, int h, int r0, int c0, int rh, int cw) {
  BinaryMask m(w, h);
  for (int r = r0; r < std::min(h, r0 + rh); ++r)
    for (int c = c0; c < std::min(w, c0 + cw); ++c) m(r, c) = 1;
  return m;
}

inline Detection det(BinaryMask m, double score) {
  return make_detection(std::move(m), score, std::nullopt);
}

inline GroundTruthMass truth(BinaryMask m) {
  return make_mass(std::move(m), 1.0);
}

// Straight-from-the-definition counterparts, sharing no code with the library.
inline double oracle_dice(const BinaryMask& a, const BinaryMask& b) {
  int na = 0, nb = 0, both = 0;
  for (int r = 0; r < a.height(); ++r)
    for (int c = 0; c < a.width(); ++c) {
      na += a(r, c) != 0;
      nb += b(r, c) != 0;
      both += a(r, c) && b(r, c);
    }
  return 2.0 * both / (na + nb);
}

struct Counts {
  int tp = 0;
  int fp = 0;
};

inline Counts oracle_match(const std::vector<Detection>& dets, const std::vector<GroundTruthMass>& gts, double t,
                    double thr) {
  std::vector<int> kept;
  for (int i = 0; i < static_cast<int>(dets.size()); ++i)
    if (dets[i].score >= t) kept.push_back(i);
  // Selection by repeatedly picking the highest remaining score, lowest index first.
  std::vector<bool> used(gts.size(), false), done(dets.size(), false);
  Counts out;
  for (std::size_t step = 0; step < kept.size(); ++step) {
    int pick = -1;
    for (int i : kept)
      if (!done[i] && (pick < 0 || dets[i].score > dets[pick].score)) pick = i;
    done[pick] = true;
    int best = -1;
    double best_d = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double d = oracle_dice(dets[pick].mask, gts[g].mask);
      if (d >= thr && d > best_d) {
        best = static_cast<int>(g);
        best_d = d;
      }
    }
    if (best >= 0) {
      used[best] = true;
      ++out.tp;
    } else {
      ++out.fp;
    }
  }
  return out;
}

inline std::vector<FrocPoint> oracle_froc(const std::vector<ImageCase>& cases, double thr) {
  std::vector<double> thresholds{std::numeric_limits<double>::infinity()};
  int masses = 0;
  for (const auto& c : cases) {
    masses += static_cast<int>(c.truths.size());
    for (const auto& d : c.detections) thresholds.push_back(d.score);
  }
  std::map<double, double> best;
  for (double t : thresholds) {
    int tp = 0, fp = 0;
    for (const auto& c : cases) {
      const auto k = oracle_match(c.detections, c.truths, t, thr);
      tp += k.tp;
      fp += k.fp;
    }
    const double fpi = static_cast<double>(fp) / static_cast<double>(cases.size());
    const double tpr = static_cast<double>(tp) / masses;
    auto [it, fresh] = best.emplace(fpi, tpr);
    if (!fresh) it->second = std::max(it->second, tpr);
  }
  std::vector<FrocPoint> pts;
  for (const auto& [fpi, tpr] : best) pts.push_back({fpi, tpr});
  return pts;
}

inline std::vector<ImageCase> random_dataset(Rng& rng) {
  constexpr int kW = 10, kH = 8;
  static const double kScores[] = {0.1, 0.3, 0.5, 0.5, 0.7, 0.9};
  std::vector<ImageCase> cases(1 + rng.below(5));
  int masses = 0;
  for (auto& c : cases) {
    const int n_truth = rng.below(4);
    for (int g = 0; g < n_truth; ++g)
      c.truths.push_back(truth(rect(kW, kH, rng.below(kH), rng.below(kW), 1 + rng.below(4), 1 + rng.below(4))));
    masses += n_truth;
    const int n_det = rng.below(7);
    for (int d = 0; d < n_det; ++d) {
      BinaryMask m;
      if (!c.truths.empty() && rng.below(2)) {
        // Jittered copy of a truth so matches and duplicates are common.
        const auto bb = bounding_box(c.truths[rng.below(static_cast<int>(c.truths.size()))].mask);
        m = rect(kW, kH, std::clamp(bb.row0 + rng.below(3) - 1, 0, kH - 1),
                 std::clamp(bb.col0 + rng.below(3) - 1, 0, kW - 1), bb.height(), bb.width());
      } else {
        m = rect(kW, kH, rng.below(kH), rng.below(kW), 1 + rng.below(3), 1 + rng.below(3));
      }
      c.detections.push_back(det(std::move(m), kScores[rng.below(6)]));
    }
  }
  if (masses == 0) cases[0].truths.push_back(truth(rect(kW, kH, 0, 0, 2, 2)));
  return cases;
}

}  // namespace mmsift::testing

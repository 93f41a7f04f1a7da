#include "mmsift/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>

namespace mmsift {

// Odd denominator for the quantised slope: k * a / kSlopeDen can never be
// exactly half-way between two integers, so rounding is tie-free.
static constexpr long long kSlopeDen = (1LL << 20) - 1;

LineSE make_line_se(int length_px, double angle_deg) {
  require(length_px >= 1, "line SE length must be >= 1, got " + std::to_string(length_px));
  require(std::isfinite(angle_deg), "line SE angle must be finite");

  LineSE se;
  se.length_px = length_px % 2 ? length_px : length_px + 1;
  se.angle_deg = std::fmod(angle_deg, 180.0);
  if (se.angle_deg < 0.0) se.angle_deg += 180.0;

  const double rad = se.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  const bool x_major = std::abs(c) >= std::abs(s);
  const double slope = x_major ? std::abs(s) / std::abs(c) : std::abs(c) / std::abs(s);
  const long long a = std::clamp<long long>(std::llround(slope * kSlopeDen), 0, kSlopeDen);
  const int sx = c < 0.0 ? -1 : 1;
  const int sy = s > 0.0 ? -1 : 1;  // rows grow downward

  const int half = (se.length_px - 1) / 2;
  std::vector<Offset> forward(half + 1);
  for (int k = 0; k <= half; ++k) {
    const int minor = static_cast<int>((2LL * k * a + kSlopeDen) / (2 * kSlopeDen));
    forward[k] = x_major ? Offset{sy * minor, sx * k} : Offset{sy * k, sx * minor};
  }
  se.offsets.reserve(se.length_px);
  for (int k = half; k >= 1; --k) se.offsets.push_back(-forward[k]);
  se.offsets.insert(se.offsets.end(), forward.begin(), forward.end());
  return se;
}

namespace {

using Pixel = std::uint16_t;

struct MinOp {
  static constexpr Pixel identity = 0xffff;
  static Pixel apply(Pixel a, Pixel b) noexcept { return a < b ? a : b; }
};

struct MaxOp {
  static constexpr Pixel identity = 0;
  static Pixel apply(Pixel a, Pixel b) noexcept { return a > b ? a : b; }
};

// Every plane of one morphological operation has the same size, so released
// buffers are kept for reuse while the operation runs instead of returning
// fresh pages to the allocator each time.
class BufferPool {
 public:
  explicit BufferPool(std::size_t size) : size_(size) { free_.reserve(kMaxFree); }

  std::unique_ptr<Pixel[]> take(std::size_t size) {
    if (size != size_ || free_.empty()) return std::make_unique_for_overwrite<Pixel[]>(size);
    auto buf = std::move(free_.back());
    free_.pop_back();
    return buf;
  }

  void give(std::unique_ptr<Pixel[]> buf, std::size_t size) {
    if (buf && size == size_ && free_.size() < kMaxFree) free_.push_back(std::move(buf));
  }

 private:
  static constexpr std::size_t kMaxFree = 64;
  std::size_t size_;
  std::vector<std::unique_ptr<Pixel[]>> free_;
};

thread_local BufferPool* t_pool = nullptr;

class PoolScope {
 public:
  explicit PoolScope(std::size_t size) : pool_(size), saved_(t_pool) { t_pool = &pool_; }
  ~PoolScope() { t_pool = saved_; }
  PoolScope(const PoolScope&) = delete;
  PoolScope& operator=(const PoolScope&) = delete;

 private:
  BufferPool pool_;
  BufferPool* saved_;
};

// Working raster with a margin; storage is left uninitialised unless a fill
// value is given.
struct Plane {
  int rows = 0;
  int cols = 0;
  std::unique_ptr<Pixel[]> px;

  Plane(int r, int c) : rows(r), cols(c) {
    px = t_pool ? t_pool->take(size()) : std::make_unique_for_overwrite<Pixel[]>(size());
  }
  Plane(int r, int c, Pixel fill) : Plane(r, c) { std::fill(px.get(), px.get() + size(), fill); }
  Plane(const Plane& o) : Plane(o.rows, o.cols) { std::copy(o.px.get(), o.px.get() + size(), px.get()); }
  Plane(Plane&& o) noexcept : rows(o.rows), cols(o.cols), px(std::move(o.px)) {}
  Plane& operator=(Plane&& o) noexcept {
    release();
    rows = o.rows;
    cols = o.cols;
    px = std::move(o.px);
    return *this;
  }
  ~Plane() { release(); }

  void release() noexcept {
    if (t_pool && px) t_pool->give(std::move(px), size());
    px.reset();
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * cols; }
  Pixel* row(int r) noexcept { return px.get() + static_cast<std::ptrdiff_t>(r) * cols; }
  const Pixel* row(int r) const noexcept { return px.get() + static_cast<std::ptrdiff_t>(r) * cols; }
};

struct Term {
  const Plane* src;
  Offset at;
};

// out(p) = op over terms of src(p + at), identity where p + at leaves the
// plane. One row of the output is finished before the next is started.
template <class Op>
Plane gather(int rows, int cols, std::span<const Term> terms) {
  Plane out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    Pixel* __restrict a = out.row(r);
    bool first = true;
    for (const auto& t : terms) {
      const int sr = r + t.at.dy;
      if (sr < 0 || sr >= rows) continue;
      const int c0 = std::clamp(-t.at.dx, 0, cols), c1 = std::clamp(cols - t.at.dx, 0, cols);
      const Pixel* __restrict s = t.src->row(sr) + t.at.dx;
      if (first) {
        std::fill(a, a + c0, Op::identity);
        std::copy(s + c0, s + c1, a + c0);
        std::fill(a + c1, a + cols, Op::identity);
        first = false;
      } else {
        for (int c = c0; c < c1; ++c) a[c] = Op::apply(a[c], s[c]);
      }
    }
    if (first) std::fill(a, a + cols, Op::identity);
  }
  return out;
}

template <class Op>
Plane shifted(const Plane& src, Offset o) {
  const Term t{&src, o};
  return gather<Op>(src.rows, src.cols, {&t, 1});
}

// Van Herk / Gil-Werman on one strided sequence: out[i] = op(in[i .. i+m-1]),
// reading identity past the end.
template <class Op>
void running_window(const Pixel* in, std::ptrdiff_t stride, int n, int m, Pixel* out,
                    std::vector<Pixel>& pre, std::vector<Pixel>& suf) {
  const int len = n + m - 1;
  pre.resize(len);
  suf.resize(len);
  for (int i = 0; i < len; ++i) {
    const Pixel v = i < n ? in[i * stride] : Op::identity;
    pre[i] = (i % m == 0) ? v : Op::apply(pre[i - 1], v);
  }
  for (int i = len - 1; i >= 0; --i) {
    const Pixel v = i < n ? in[i * stride] : Op::identity;
    suf[i] = (i % m == m - 1 || i == len - 1) ? v : Op::apply(suf[i + 1], v);
  }
  for (int i = 0; i < n; ++i) out[i * stride] = Op::apply(suf[i], pre[i + m - 1]);
}

// V(p) = op over j in [0, m) of g(p + j*step); identity outside the plane.
template <class Op>
Plane window_along(const Plane& g, Offset step, int m) {
  if (m == 1) return g;
  if (step.dy < 0 || (step.dy == 0 && step.dx < 0)) {
    // Forward window along -step, re-anchored at its far end.
    return shifted<Op>(window_along<Op>(g, -step, m), step * (m - 1));
  }
  if (m <= 4) {
    std::vector<Term> terms;
    for (int j = 0; j < m; ++j) terms.push_back({&g, step * j});
    return gather<Op>(g.rows, g.cols, terms);
  }

  if (step.dy == 0) {
    Plane out(g.rows, g.cols);
    // Horizontal traversals: one strided sequence per residue class per row.
    std::vector<Pixel> pre, suf;
    const int fx = step.dx;
    for (int r = 0; r < g.rows; ++r) {
      for (int s = 0; s < fx && s < g.cols; ++s) {
        const int n = (g.cols - s + fx - 1) / fx;
        running_window<Op>(g.row(r) + s, fx, n, m, out.row(r) + s, pre, suf);
      }
    }
    return out;
  }

  // step.dy > 0: traversals advance one block index per row group of height
  // fy, so prefix/suffix recurrences run row by row and vectorise along x.
  // Block boundaries: (r / fy) % m == 0 starts a block; traversal starts and
  // ends also break blocks, which van Herk tolerates (short first/last block).
  const int fy = step.dy;
  const int fx = step.dx;
  Plane pre(g.rows, g.cols);
  Plane suf(g.rows, g.cols);

  // Columns whose predecessor (c - fx) / successor (c + fx) is inside.
  const int lo = std::clamp(fx, 0, g.cols), hi = std::clamp(g.cols + fx, 0, g.cols);
  const int slo = std::clamp(-fx, 0, g.cols), shi = std::clamp(g.cols - fx, 0, g.cols);

  for (int r = 0; r < g.rows; ++r) {
    Pixel* __restrict p = pre.row(r);
    const Pixel* __restrict v = g.row(r);
    std::copy(v, v + g.cols, p);
    if (r < fy || (r / fy) % m == 0) continue;
    const Pixel* __restrict prev = pre.row(r - fy) - fx;
    for (int c = lo; c < hi; ++c) p[c] = Op::apply(prev[c], v[c]);
  }

  for (int r = g.rows - 1; r >= 0; --r) {
    Pixel* __restrict s = suf.row(r);
    const Pixel* __restrict v = g.row(r);
    std::copy(v, v + g.cols, s);
    if (r + fy >= g.rows || (r / fy + 1) % m == 0) continue;
    const Pixel* __restrict next = suf.row(r + fy) + fx;
    for (int c = slo; c < shi; ++c) s[c] = Op::apply(next[c], v[c]);
  }

  // V(p) = op(suf(p), pre(p + (m-1) step)); when the far end leaves the plane
  // the window is incomplete and the value is never consumed.
  const Term terms[] = {{&suf, {0, 0}}, {&pre, step * (m - 1)}};
  return gather<Op>(g.rows, g.cols, terms);
}

template <class Op>
Plane fold_points(const Plane& g, std::span<const Offset> pts) {
  std::vector<Term> terms;
  for (const auto& o : pts) terms.push_back({&g, o});
  return gather<Op>(g.rows, g.cols, terms);
}

// E(p) = op over k of g(p + pts[k]) for an ordered digital straight segment.
//
// Consecutive points differ by one of two steps. The frequent step F forms
// runs separated by a single isolated step I; interior runs hold m or m+1
// points. Each run is covered by at most two length-m windows along F, and
// the window pairs straddling each isolated step merge into one image K, so
// the run starts form a shorter segment over K with steps (m-1)F+I and mF+I.
// Recursing on that segment is the continued-fraction expansion of the slope.
template <class Op>
Plane reduce_segment(const Plane& g, std::span<const Offset> pts) {
  const int n = static_cast<int>(pts.size());
  if (n <= 3) return fold_points<Op>(g, pts);
  if (const auto first = pts[1] - pts[0]; first.dy < 0 || (first.dy == 0 && first.dx < 0)) {
    // The result is order-independent; walk the segment so steps point down.
    const std::vector<Offset> rev(pts.rbegin(), pts.rend());
    return reduce_segment<Op>(g, rev);
  }

  std::vector<Offset> steps(n - 1);
  for (int i = 0; i + 1 < n; ++i) steps[i] = pts[i + 1] - pts[i];

  const Offset a = steps[0];
  std::optional<Offset> b;
  for (const auto& s : steps) {
    if (s == a) continue;
    if (!b) b = s;
    else if (s != *b) return fold_points<Op>(g, pts);
  }
  if (!b) return shifted<Op>(window_along<Op>(g, a, n), pts[0]);

  bool a_repeats = false, b_repeats = false;
  for (int i = 1; i + 1 < n; ++i) {
    if (steps[i] != steps[i - 1]) continue;
    (steps[i] == a ? a_repeats : b_repeats) = true;
  }
  if (a_repeats && b_repeats) return fold_points<Op>(g, pts);
  const Offset frequent = b_repeats ? *b : a;
  const Offset isolated = b_repeats ? a : *b;

  struct Run {
    int start;
    int count;
  };
  std::vector<Run> runs{{0, 1}};
  for (int i = 0; i + 1 < n; ++i) {
    if (steps[i] == frequent) ++runs.back().count;
    else runs.push_back({i + 1, 1});
  }
  const int nruns = static_cast<int>(runs.size());

  std::map<int, Plane> windows;
  auto window = [&](int count) -> const Plane& {
    if (count == 1) return g;
    auto it = windows.find(count);
    if (it == windows.end()) it = windows.emplace(count, window_along<Op>(g, frequent, count)).first;
    return it->second;
  };
  std::vector<Term> terms;

  int m = n, mmax = 0;
  for (int j = 1; j + 1 < nruns; ++j) {
    m = std::min(m, runs[j].count);
    mmax = std::max(mmax, runs[j].count);
  }
  if (nruns < 4 || mmax > m + 1) {
    for (const auto& run : runs) terms.push_back({&window(run.count), pts[run.start]});
    return gather<Op>(g.rows, g.cols, terms);
  }

  const Plane& v = window(m);
  auto cover = [&](const Run& run) {
    if (run.count == m + 1) {
      terms.push_back({&v, pts[run.start]});
      terms.push_back({&v, pts[run.start + 1]});
    } else {
      terms.push_back({&window(run.count), pts[run.start]});
    }
  };
  cover(runs.front());
  cover(runs.back());
  terms.push_back({&v, pts[runs[1].start]});
  const Run& last = runs[nruns - 2];
  terms.push_back({&v, pts[last.start + last.count - m]});

  // K(p) = op(V(p), V(p - D)), D = (m-1)F + I: the first window of a run
  // joined with the second window of the run before it.
  const Offset d = frequent * (m - 1) + isolated;
  const Term pair[] = {{&v, {0, 0}}, {&v, -d}};
  const Plane k = gather<Op>(g.rows, g.cols, pair);

  std::vector<Offset> starts;
  starts.reserve(nruns);
  for (int j = 2; j <= nruns - 2; ++j) starts.push_back(pts[runs[j].start]);
  const Plane sub = reduce_segment<Op>(k, starts);
  terms.push_back({&sub, {0, 0}});
  return gather<Op>(g.rows, g.cols, terms);
}

struct Margin {
  int rows = 0;
  int cols = 0;
};

Margin margin_for(const LineSE& se) {
  Margin m;
  for (const auto& o : se.offsets) {
    m.rows = std::max(m.rows, std::abs(o.dy));
    m.cols = std::max(m.cols, std::abs(o.dx));
  }
  return m;
}

void refill_margin(Plane& p, Margin m, Pixel fill) {
  for (int r = 0; r < p.rows; ++r) {
    Pixel* row = p.row(r);
    if (r < m.rows || r >= p.rows - m.rows) {
      std::fill(row, row + p.cols, fill);
    } else {
      std::fill(row, row + m.cols, fill);
      std::fill(row + p.cols - m.cols, row + p.cols, fill);
    }
  }
}

// Copies a rows x cols block from src to dst, transposing when asked.
void copy_block(const Pixel* src, std::ptrdiff_t src_stride, Pixel* dst, std::ptrdiff_t dst_stride, int rows,
                int cols, bool transpose) {
  if (!transpose) {
    for (int r = 0; r < rows; ++r) std::copy(src + r * src_stride, src + r * src_stride + cols, dst + r * dst_stride);
    return;
  }
  constexpr int kTile = 32;
  for (int r0 = 0; r0 < rows; r0 += kTile) {
    const int r1 = std::min(r0 + kTile, rows);
    for (int c0 = 0; c0 < cols; c0 += kTile) {
      const int c1 = std::min(c0 + kTile, cols);
      for (int c = c0; c < c1; ++c) {
        Pixel* d = dst + c * dst_stride;
        for (int r = r0; r < r1; ++r) d[r] = src[r * src_stride + c];
      }
    }
  }
}

Plane embed(const GrayImage16& img, Margin m, Pixel fill, bool transpose) {
  const int h = transpose ? img.width() : img.height();
  const int w = transpose ? img.height() : img.width();
  Plane p(h + 2 * m.rows, w + 2 * m.cols);
  refill_margin(p, m, fill);
  copy_block(img.pixels().data(), img.width(), p.row(m.rows) + m.cols, p.cols, img.height(), img.width(),
             transpose);
  return p;
}

GrayImage16 extract(const Plane& p, Margin m, const GrayImage16& like, bool transpose) {
  GrayImage16 out(like.width(), like.height(), 0, like.pixel_size_mm());
  const int h = transpose ? like.width() : like.height();
  const int w = transpose ? like.height() : like.width();
  copy_block(p.row(m.rows) + m.cols, p.cols, out.pixels().data(), like.width(), h, w, transpose);
  return out;
}

std::vector<Offset> reflected(const LineSE& se) {
  std::vector<Offset> out;
  out.reserve(se.offsets.size());
  for (auto it = se.offsets.rbegin(); it != se.offsets.rend(); ++it) out.push_back(-*it);
  return out;
}

// Lines closer to horizontal are processed on the transposed raster so every
// step has a row component and the row-recurrence path applies throughout.
bool wants_transpose(const LineSE& se) {
  for (std::size_t i = 1; i < se.offsets.size(); ++i)
    if (se.offsets[i].dy == se.offsets[i - 1].dy) return true;
  return false;
}

LineSE transposed(const LineSE& se) {
  LineSE out = se;
  for (auto& o : out.offsets) std::swap(o.dy, o.dx);
  return out;
}

enum class Morph { Erode, Dilate, Open };

GrayImage16 run(const GrayImage16& img, const LineSE& line, Morph what) {
  if (img.empty()) return img;
  const bool t = wants_transpose(line);
  const LineSE se = t ? transposed(line) : line;
  const Margin m = margin_for(se);
  const PoolScope scope(static_cast<std::size_t>(img.height() + 2 * (t ? m.cols : m.rows)) *
                        (img.width() + 2 * (t ? m.rows : m.cols)));
  switch (what) {
    case Morph::Erode:
      return extract(reduce_segment<MinOp>(embed(img, m, MinOp::identity, t), se.offsets), m, img, t);
    case Morph::Dilate:
      return extract(reduce_segment<MaxOp>(embed(img, m, MaxOp::identity, t), reflected(se)), m, img, t);
    case Morph::Open: {
      Plane eroded = reduce_segment<MinOp>(embed(img, m, MinOp::identity, t), se.offsets);
      refill_margin(eroded, m, MaxOp::identity);
      return extract(reduce_segment<MaxOp>(eroded, reflected(se)), m, img, t);
    }
  }
  return img;
}

}  // namespace

GrayImage16 erode_line(const GrayImage16& img, const LineSE& se) {
  return run(img, se, Morph::Erode);
}

GrayImage16 dilate_line(const GrayImage16& img, const LineSE& se) {
  return run(img, se, Morph::Dilate);
}

GrayImage16 open_line(const GrayImage16& img, const LineSE& se) {
  return run(img, se, Morph::Open);
}

namespace naive {

namespace {

template <class Op>
GrayImage16 apply(const GrayImage16& img, std::span<const Offset> offsets) {
  GrayImage16 out(img.width(), img.height(), 0, img.pixel_size_mm());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      Pixel acc = Op::identity;
      for (const auto& o : offsets) {
        const int rr = r + o.dy, cc = c + o.dx;
        if (img.contains(rr, cc)) acc = Op::apply(acc, img(rr, cc));
      }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace

GrayImage16 erode_line(const GrayImage16& img, const LineSE& se) {
  return apply<MinOp>(img, se.offsets);
}

GrayImage16 dilate_line(const GrayImage16& img, const LineSE& se) {
  return apply<MaxOp>(img, reflected(se));
}

GrayImage16 open_line(const GrayImage16& img, const LineSE& se) {
  return naive::dilate_line(naive::erode_line(img, se), se);
}

}  // namespace naive

}  // namespace mmsift

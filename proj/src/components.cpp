#include "mmsift/components.hpp"

#include <algorithm>

namespace mmsift {

BinaryMask ComponentLabels::mask_of(int label) const {
  BinaryMask out(labels.width(), labels.height());
  const auto src = labels.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == label;
  return out;
}

ComponentLabels label_components(const BinaryMask& mask, int connectivity) {
  require(connectivity == 4 || connectivity == 8, "connectivity must be 4 or 8");
  const int w = mask.width(), h = mask.height();
  ComponentLabels out{Raster<int>(w, h, 0), {}};

  static constexpr int kDr[] = {-1, 1, 0, 0, -1, -1, 1, 1};
  static constexpr int kDc[] = {0, 0, -1, 1, -1, 1, -1, 1};

  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c) || out.labels(r, c)) continue;
      Component comp;
      comp.label = static_cast<int>(out.components.size()) + 1;
      comp.bbox = {r, c, r, c};
      out.labels(r, c) = comp.label;
      stack.assign(1, {r, c});
      while (!stack.empty()) {
        const auto [pr, pc] = stack.back();
        stack.pop_back();
        ++comp.area;
        comp.bbox.row0 = std::min(comp.bbox.row0, pr);
        comp.bbox.row1 = std::max(comp.bbox.row1, pr);
        comp.bbox.col0 = std::min(comp.bbox.col0, pc);
        comp.bbox.col1 = std::max(comp.bbox.col1, pc);
        for (int k = 0; k < connectivity; ++k) {
          const int nr = pr + kDr[k], nc = pc + kDc[k];
          if (!mask.contains(nr, nc) || !mask(nr, nc) || out.labels(nr, nc)) continue;
          out.labels(nr, nc) = comp.label;
          stack.emplace_back(nr, nc);
        }
      }
      out.components.push_back(comp);
    }
  }
  return out;
}

}  // namespace mmsift

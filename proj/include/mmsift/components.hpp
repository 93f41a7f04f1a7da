#pragma once

#include <vector>

#include "mmsift/raster.hpp"

namespace mmsift {

struct Component {
  int label = 0;  // 1-based
  std::size_t area = 0;
  BBox bbox;
};

struct ComponentLabels {
  Raster<int> labels;  // 0 = background
  std::vector<Component> components;  // ordered by label

  BinaryMask mask_of(int label) const;
};

/// Labels connected set pixels with 4- or 8-connectivity. Labels are assigned
/// in raster order of each component's first pixel.
ComponentLabels label_components(const BinaryMask& mask, int connectivity);

}  // namespace mmsift

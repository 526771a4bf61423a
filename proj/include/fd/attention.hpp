#pragma once

#include "fd/tensor.hpp"

namespace fd {

struct AttentionMask {
  /// Channel L1 norm per feature-map location, min-max normalized to [0, 1].
  Matrix<float> mask;
  /// Original image multiplied by the mask resized to the image size.
  Image overlay;
  /// True when the norm map was constant and the mask fell back to all ones.
  bool degenerate = false;
};

/// Attention overlay for sample `sample` of `f`.
AttentionMask extract_attention_mask(const FeatureMap<float>& f, const Image& original,
                                     Index sample = 0);

}  // namespace fd

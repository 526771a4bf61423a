#include "fd/attention.hpp"

#include "fd/views.hpp"

#include <iostream>

namespace fd {

AttentionMask extract_attention_mask(const FeatureMap<float>& f, const Image& original,
                                     Index sample) {
  if (f.empty() || sample < 0 || sample >= f.batch)
    throw GeometryError("attention: no such sample in feature map");
  if (f.height > original.height || f.width > original.width)
    throw GeometryError("attention: feature map larger than the image");

  AttentionMask out;
  out.mask.resize(f.height, f.width);
  const auto norms = f.sample(sample).cwiseAbs().colwise().sum();
  for (Index y = 0; y < f.height; ++y)
    for (Index x = 0; x < f.width; ++x) out.mask(y, x) = norms(y * f.width + x);

  const float lo = out.mask.minCoeff();
  const float hi = out.mask.maxCoeff();
  if (!(hi > lo)) {
    std::clog << "warning: attention norm map is constant; emitting a pass-through mask\n";
    out.degenerate = true;
    out.mask.setOnes();
  } else {
    out.mask = (out.mask.array() - lo) / (hi - lo);
  }

  Image small(f.height, f.width, 1);
  for (Index y = 0; y < f.height; ++y)
    for (Index x = 0; x < f.width; ++x) small(0, y, x) = out.mask(y, x);
  const Image full = resize(small, original.height, original.width);
  out.overlay = original;
  for (Index c = 0; c < original.channels(); ++c)
    out.overlay.pixels.row(c).array() *= full.pixels.row(0).array();
  return out;
}

}  // namespace fd

#include "fd/losses.hpp"

namespace fd {

ViewMask make_view_mask(const std::vector<EraseRecord>& erases, const std::vector<ViewSpec>& views,
                        Index height, Index width, double threshold) {
  ViewMask mask(static_cast<Index>(views.size()), static_cast<Index>(erases.size()));
  for (std::size_t k = 0; k < views.size(); ++k)
    for (std::size_t i = 0; i < erases.size(); ++i)
      mask.set(static_cast<Index>(k), static_cast<Index>(i),
               !(erase_overlap_fraction(erases[i], views[k], height, width) > threshold));
  return mask;
}

}  // namespace fd

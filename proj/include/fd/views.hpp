#pragma once

#include "fd/tensor.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fd {

/// Exact non-negative rational used for stripe boundaries. Stored as written
/// ("2/4" stays 2/4) so registries round-trip verbatim.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Fraction parse(const std::string& text);
  std::string str() const;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  /// round(num / den * extent), ties rounded up.
  Index scale(Index extent) const;

  friend bool operator==(const Fraction& a, const Fraction& b) {
    return a.num * b.den == b.num * a.den;
  }
  friend bool operator<(const Fraction& a, const Fraction& b) {
    return a.num * b.den < b.num * a.den;
  }
};

struct ViewSpec {
  std::string name;
  Fraction top;
  Fraction bottom;
  Index out_height = 0;
  Index out_width = 0;

  /// Number of uniform stripes the image is divided into for this view.
  Index stripes() const { return std::max(top.den, bottom.den); }
  bool holistic() const { return top == Fraction{0, 1} && bottom == Fraction{1, 1}; }

  /// Half-open row range [first, second) of the stripe in an image of `height` rows.
  std::pair<Index, Index> rows(Index height) const;
  void validate() const;
};

using ViewRegistry = std::vector<ViewSpec>;

/// The seven views: Holistic at 256x128, two groups of partial stripes at 224x224.
ViewRegistry canonical_views();

/// Same stripes as `views` with every output size replaced.
ViewRegistry rescaled_views(const ViewRegistry& views, Index holistic_h, Index holistic_w,
                            Index partial_h, Index partial_w);

const ViewSpec& find_view(const ViewRegistry& views, const std::string& name);
Index view_index(const ViewRegistry& views, const std::string& name);

nlohmann::json views_to_json(const ViewRegistry& views);
ViewRegistry views_from_json(const nlohmann::json& j);

enum class Interpolation { bilinear, nearest };

Image resize(const Image& image, Index out_height, Index out_width,
             Interpolation method = Interpolation::bilinear);
Image flip_horizontal(const Image& image);

/// Extracts the view's full-width stripe and resizes it to the view's output size.
Image crop_view(const Image& image, const ViewSpec& spec,
                Interpolation method = Interpolation::bilinear);

enum class AugmentStage { partial_teacher, holistic_or_initial_student, final_student };

struct EnabledOps {
  bool flip = false;
  bool erasing = false;
  bool crop = false;
  bool color = false;
  bool rotation = false;
};

EnabledOps enabled_ops(AugmentStage stage);
std::string to_string(AugmentStage stage);
AugmentStage augment_stage_from_string(const std::string& name);

struct AugmentParams {
  double flip_prob = 0.5;
  double erase_prob = 0.5;
  double erase_area_min = 0.02;
  double erase_area_max = 0.4;
  double erase_aspect_min = 0.3;
  int erase_max_attempts = 100;
  Index crop_pad = 4;
  double rotation_deg = 10.0;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
};

nlohmann::json augment_params_to_json(const AugmentParams& p);
AugmentParams augment_params_from_json(const nlohmann::json& j);

/// Erased rectangle, half-open rows [row0, row1) and cols [col0, col1), in the
/// coordinates of the image passed to `augment`.
struct EraseRecord {
  Index row0 = 0;
  Index row1 = 0;
  Index col0 = 0;
  Index col1 = 0;
  bool present = false;
};

struct Augmented {
  Image image;
  bool flip_applied = false;
  EraseRecord erase;
};

/// Applies the ops enabled for `stage` in the order erase, flip, crop, color,
/// rotation. Pure in (image, stage, seed, params).
Augmented augment(const Image& image, AugmentStage stage, std::uint64_t seed,
                  const AugmentParams& params = {});

/// Fraction of the view's stripe (in an H x W image) covered by the erase rectangle.
double erase_overlap_fraction(const EraseRecord& erase, const ViewSpec& spec, Index height,
                              Index width);

}  // namespace fd

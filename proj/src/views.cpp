#include "fd/views.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace fd {

Fraction Fraction::parse(const std::string& text) {
  const auto slash = text.find('/');
  try {
    Fraction f;
    if (slash == std::string::npos) {
      f.num = std::stoll(text);
      f.den = 1;
    } else {
      f.num = std::stoll(text.substr(0, slash));
      f.den = std::stoll(text.substr(slash + 1));
    }
    if (f.den <= 0 || f.num < 0) throw ConfigError("fraction out of range: " + text);
    return f;
  } catch (const std::logic_error&) {
    throw ConfigError("malformed fraction: '" + text + "'");
  }
}

std::string Fraction::str() const { return std::to_string(num) + "/" + std::to_string(den); }

Index Fraction::scale(Index extent) const {
  return static_cast<Index>((2 * num * extent + den) / (2 * den));
}

std::pair<Index, Index> ViewSpec::rows(Index height) const {
  return {top.scale(height), bottom.scale(height)};
}

void ViewSpec::validate() const {
  if (name.empty()) throw ConfigError("view without a name");
  if (!(top < bottom)) throw ConfigError("view " + name + ": top must be above bottom");
  if (Fraction{1, 1} < bottom) throw ConfigError("view " + name + ": bottom exceeds 1");
  if (out_height <= 0 || out_width <= 0)
    throw ConfigError("view " + name + ": output size must be positive");
}

ViewRegistry canonical_views() {
  auto f = [](std::int64_t n, std::int64_t d) { return Fraction{n, d}; };
  return {
      {"Holistic", f(0, 1), f(1, 1), 256, 128},
      {"Up1", f(1, 4), f(2, 4), 224, 224},
      {"Mid1", f(2, 4), f(3, 4), 224, 224},
      {"Dn1", f(3, 4), f(4, 4), 224, 224},
      {"Up2", f(1, 7), f(3, 7), 224, 224},
      {"Mid2", f(3, 7), f(5, 7), 224, 224},
      {"Dn2", f(5, 7), f(7, 7), 224, 224},
  };
}

ViewRegistry rescaled_views(const ViewRegistry& views, Index holistic_h, Index holistic_w,
                            Index partial_h, Index partial_w) {
  ViewRegistry out = views;
  for (auto& v : out) {
    v.out_height = v.holistic() ? holistic_h : partial_h;
    v.out_width = v.holistic() ? holistic_w : partial_w;
  }
  return out;
}

const ViewSpec& find_view(const ViewRegistry& views, const std::string& name) {
  return views[static_cast<std::size_t>(view_index(views, name))];
}

Index view_index(const ViewRegistry& views, const std::string& name) {
  for (std::size_t i = 0; i < views.size(); ++i)
    if (views[i].name == name) return static_cast<Index>(i);
  throw ConfigError("unknown view: " + name);
}

nlohmann::json views_to_json(const ViewRegistry& views) {
  auto arr = nlohmann::json::array();
  for (const auto& v : views) {
    arr.push_back({{"name", v.name},
                   {"top", v.top.str()},
                   {"bottom", v.bottom.str()},
                   {"height", v.out_height},
                   {"width", v.out_width}});
  }
  return arr;
}

ViewRegistry views_from_json(const nlohmann::json& j) {
  ViewRegistry out;
  for (const auto& e : j) {
    ViewSpec v;
    v.name = e.at("name").get<std::string>();
    v.top = Fraction::parse(e.at("top").get<std::string>());
    v.bottom = Fraction::parse(e.at("bottom").get<std::string>());
    v.out_height = e.at("height").get<Index>();
    v.out_width = e.at("width").get<Index>();
    v.validate();
    out.push_back(std::move(v));
  }
  if (out.empty()) throw ConfigError("empty view registry");
  return out;
}

namespace {

float sample_bilinear(const Image& im, Index c, double sy, double sx) {
  sy = std::clamp(sy, 0.0, static_cast<double>(im.height - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(im.width - 1));
  const auto y0 = static_cast<Index>(std::floor(sy));
  const auto x0 = static_cast<Index>(std::floor(sx));
  const Index y1 = std::min(y0 + 1, im.height - 1);
  const Index x1 = std::min(x0 + 1, im.width - 1);
  const double wy = sy - static_cast<double>(y0);
  const double wx = sx - static_cast<double>(x0);
  const double top = (1.0 - wx) * im(c, y0, x0) + wx * im(c, y0, x1);
  const double bot = (1.0 - wx) * im(c, y1, x0) + wx * im(c, y1, x1);
  return static_cast<float>((1.0 - wy) * top + wy * bot);
}

Image crop_rows(const Image& image, Index row0, Index row1) {
  Image out(row1 - row0, image.width, image.channels());
  out.pixels = image.pixels.middleCols(row0 * image.width, (row1 - row0) * image.width);
  return out;
}

}  // namespace

Image resize(const Image& image, Index out_height, Index out_width, Interpolation method) {
  if (image.height <= 0 || image.width <= 0) throw GeometryError("resize of an empty image");
  if (out_height == image.height && out_width == image.width) return image;
  Image out(out_height, out_width, image.channels());
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_width);
  for (Index y = 0; y < out_height; ++y) {
    const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (Index x = 0; x < out_width; ++x) {
      const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      for (Index c = 0; c < image.channels(); ++c) {
        if (method == Interpolation::nearest) {
          const Index ny = std::min(static_cast<Index>((static_cast<double>(y) + 0.5) * sy),
                                    image.height - 1);
          const Index nx = std::min(static_cast<Index>((static_cast<double>(x) + 0.5) * sx),
                                    image.width - 1);
          out(c, y, x) = image(c, ny, nx);
        } else {
          out(c, y, x) = sample_bilinear(image, c, src_y, src_x);
        }
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width, image.channels());
  for (Index y = 0; y < image.height; ++y)
    for (Index x = 0; x < image.width; ++x)
      out.pixels.col(y * image.width + x) =
          image.pixels.col(y * image.width + (image.width - 1 - x));
  return out;
}

Image crop_view(const Image& image, const ViewSpec& spec, Interpolation method) {
  if (image.height < spec.stripes())
    throw GeometryError("image of height " + std::to_string(image.height) +
                        " is too small for the " + std::to_string(spec.stripes()) +
                        "-stripe view " + spec.name);
  const auto [row0, row1] = spec.rows(image.height);
  if (row1 <= row0 || image.width <= 0)
    throw GeometryError("view " + spec.name + " yields an empty stripe");
  return resize(crop_rows(image, row0, row1), spec.out_height, spec.out_width, method);
}

EnabledOps enabled_ops(AugmentStage stage) {
  switch (stage) {
    case AugmentStage::partial_teacher:
      return {true, true, true, true, true};
    case AugmentStage::holistic_or_initial_student:
      return {true, true, true, false, false};
    case AugmentStage::final_student:
      return {true, true, false, false, false};
  }
  return {};
}

std::string to_string(AugmentStage stage) {
  switch (stage) {
    case AugmentStage::partial_teacher:
      return "partial_teacher";
    case AugmentStage::holistic_or_initial_student:
      return "holistic_or_initial_student";
    case AugmentStage::final_student:
      return "final_student";
  }
  return "?";
}

AugmentStage augment_stage_from_string(const std::string& name) {
  for (auto s : {AugmentStage::partial_teacher, AugmentStage::holistic_or_initial_student,
                 AugmentStage::final_student})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown augmentation stage: " + name);
}

nlohmann::json augment_params_to_json(const AugmentParams& p) {
  return {{"flip_prob", p.flip_prob},
          {"erase_prob", p.erase_prob},
          {"erase_area_min", p.erase_area_min},
          {"erase_area_max", p.erase_area_max},
          {"erase_aspect_min", p.erase_aspect_min},
          {"erase_max_attempts", p.erase_max_attempts},
          {"crop_pad", p.crop_pad},
          {"rotation_deg", p.rotation_deg},
          {"brightness", p.brightness},
          {"contrast", p.contrast},
          {"saturation", p.saturation}};
}

AugmentParams augment_params_from_json(const nlohmann::json& j) {
  AugmentParams p;
  p.flip_prob = j.value("flip_prob", p.flip_prob);
  p.erase_prob = j.value("erase_prob", p.erase_prob);
  p.erase_area_min = j.value("erase_area_min", p.erase_area_min);
  p.erase_area_max = j.value("erase_area_max", p.erase_area_max);
  p.erase_aspect_min = j.value("erase_aspect_min", p.erase_aspect_min);
  p.erase_max_attempts = j.value("erase_max_attempts", p.erase_max_attempts);
  p.crop_pad = j.value("crop_pad", p.crop_pad);
  p.rotation_deg = j.value("rotation_deg", p.rotation_deg);
  p.brightness = j.value("brightness", p.brightness);
  p.contrast = j.value("contrast", p.contrast);
  p.saturation = j.value("saturation", p.saturation);
  return p;
}

namespace {

EraseRecord random_erase(Image& im, std::mt19937_64& rng, const AugmentParams& p) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) >= p.erase_prob) return {};
  const double area = static_cast<double>(im.height * im.width);
  for (int attempt = 0; attempt < p.erase_max_attempts; ++attempt) {
    const double target = area * (p.erase_area_min + unit(rng) * (p.erase_area_max - p.erase_area_min));
    const double log_lo = std::log(p.erase_aspect_min);
    const double aspect = std::exp(log_lo + unit(rng) * (-2.0 * log_lo));
    const auto h = static_cast<Index>(std::lround(std::sqrt(target * aspect)));
    const auto w = static_cast<Index>(std::lround(std::sqrt(target / aspect)));
    if (h <= 0 || w <= 0 || h >= im.height || w >= im.width) continue;
    const auto row0 = std::uniform_int_distribution<Index>(0, im.height - h)(rng);
    const auto col0 = std::uniform_int_distribution<Index>(0, im.width - w)(rng);
    for (Index y = row0; y < row0 + h; ++y)
      for (Index x = col0; x < col0 + w; ++x)
        for (Index c = 0; c < im.channels(); ++c) im(c, y, x) = static_cast<float>(unit(rng));
    return {row0, row0 + h, col0, col0 + w, true};
  }
  return {};
}

Image pad_crop(const Image& im, Index pad, std::mt19937_64& rng) {
  const auto dy = std::uniform_int_distribution<Index>(0, 2 * pad)(rng) - pad;
  const auto dx = std::uniform_int_distribution<Index>(0, 2 * pad)(rng) - pad;
  Image out(im.height, im.width, im.channels());
  for (Index y = 0; y < im.height; ++y) {
    const Index sy = y + dy;
    if (sy < 0 || sy >= im.height) continue;
    for (Index x = 0; x < im.width; ++x) {
      const Index sx = x + dx;
      if (sx < 0 || sx >= im.width) continue;
      out.pixels.col(y * im.width + x) = im.pixels.col(sy * im.width + sx);
    }
  }
  return out;
}

void color_jitter(Image& im, std::mt19937_64& rng, const AugmentParams& p) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto b = static_cast<float>(1.0 + p.brightness * unit(rng));
  const auto c = static_cast<float>(1.0 + p.contrast * unit(rng));
  const auto s = static_cast<float>(1.0 + p.saturation * unit(rng));
  im.pixels *= b;
  const Eigen::RowVectorXf gray = 0.299f * im.pixels.row(0) + 0.587f * im.pixels.row(1) +
                                  0.114f * im.pixels.row(2);
  const float mean_gray = gray.mean();
  im.pixels = ((im.pixels.array() - mean_gray) * c + mean_gray).matrix();
  const Eigen::RowVectorXf gray2 = 0.299f * im.pixels.row(0) + 0.587f * im.pixels.row(1) +
                                   0.114f * im.pixels.row(2);
  for (Index ch = 0; ch < im.channels(); ++ch)
    im.pixels.row(ch) = gray2 + s * (im.pixels.row(ch) - gray2);
  im.pixels = im.pixels.cwiseMax(0.0f).cwiseMin(1.0f);
}

Image rotate(const Image& im, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cy = (static_cast<double>(im.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(im.width) - 1.0) / 2.0;
  Image out(im.height, im.width, im.channels());
  for (Index y = 0; y < im.height; ++y) {
    for (Index x = 0; x < im.width; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sy = cy + cs * dy - sn * dx;
      const double sx = cx + sn * dy + cs * dx;
      if (sy < -0.5 || sx < -0.5 || sy > static_cast<double>(im.height) - 0.5 ||
          sx > static_cast<double>(im.width) - 0.5)
        continue;
      for (Index c = 0; c < im.channels(); ++c) out(c, y, x) = sample_bilinear(im, c, sy, sx);
    }
  }
  return out;
}

}  // namespace

Augmented augment(const Image& image, AugmentStage stage, std::uint64_t seed,
                  const AugmentParams& params) {
  const EnabledOps ops = enabled_ops(stage);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Augmented out;
  out.image = image;
  if (ops.erasing) out.erase = random_erase(out.image, rng, params);
  if (ops.flip && unit(rng) < params.flip_prob) {
    out.image = flip_horizontal(out.image);
    out.flip_applied = true;
  }
  if (ops.crop && params.crop_pad > 0) out.image = pad_crop(out.image, params.crop_pad, rng);
  if (ops.color) color_jitter(out.image, rng, params);
  if (ops.rotation && params.rotation_deg > 0.0)
    out.image = rotate(out.image, (2.0 * unit(rng) - 1.0) * params.rotation_deg);
  return out;
}

double erase_overlap_fraction(const EraseRecord& erase, const ViewSpec& spec, Index height,
                              Index width) {
  if (!erase.present) return 0.0;
  const auto [row0, row1] = spec.rows(height);
  const Index stripe_area = (row1 - row0) * width;
  if (stripe_area <= 0) return 0.0;
  const Index rows = std::max<Index>(0, std::min(row1, erase.row1) - std::max(row0, erase.row0));
  const Index cols =
      std::max<Index>(0, std::min(width, erase.col1) - std::max<Index>(0, erase.col0));
  return static_cast<double>(rows * cols) / static_cast<double>(stripe_area);
}

}  // namespace fd

#include "fd/batch.hpp"

#include "fd/views.hpp"

namespace fd {

nlohmann::json normalization_to_json(const Normalization& n) {
  return {{"mean", n.mean}, {"std", n.std}};
}

Normalization normalization_from_json(const nlohmann::json& j) {
  Normalization n;
  n.mean = j.value("mean", n.mean);
  n.std = j.value("std", n.std);
  for (float s : n.std)
    if (!(s > 0.0f)) throw ConfigError("normalization std must be positive");
  return n;
}

FeatureMap<float> to_batch(std::span<const Image> images, const Normalization& norm) {
  if (images.empty()) throw GeometryError("empty image batch");
  const Index h = images.front().height;
  const Index w = images.front().width;
  FeatureMap<float> out(static_cast<Index>(images.size()), 3, h, w);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& im = images[n];
    if (im.height != h || im.width != w || im.channels() != 3)
      throw GeometryError("images in a batch must share one size");
    auto dst = out.sample(static_cast<Index>(n));
    for (Index c = 0; c < 3; ++c)
      dst.row(c) = (im.pixels.row(c).array() - norm.mean[static_cast<std::size_t>(c)]) /
                   norm.std[static_cast<std::size_t>(c)];
  }
  return out;
}

Matrix<float> flip_averaged(const EmbedFn& embed, std::span<const Image> crops) {
  std::vector<Image> flipped;
  flipped.reserve(crops.size());
  for (const Image& im : crops) flipped.push_back(flip_horizontal(im));
  const Matrix<float> plain = embed(crops);
  const Matrix<float> mirrored = embed(flipped);
  if (plain.cols() != static_cast<Index>(crops.size()) || mirrored.cols() != plain.cols() ||
      mirrored.rows() != plain.rows())
    throw ConfigError("embedding function returned an unexpected shape");
  return (plain + mirrored) / 2.0f;
}

}  // namespace fd

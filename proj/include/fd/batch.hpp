#pragma once

#include "fd/tensor.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace fd {

/// Per-channel mean / std normalization applied to [0, 1] RGB before a network.
struct Normalization {
  std::array<float, 3> mean = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> std = {0.229f, 0.224f, 0.225f};
};

nlohmann::json normalization_to_json(const Normalization& n);
Normalization normalization_from_json(const nlohmann::json& j);

/// Stacks equally sized images into a normalized network input batch.
FeatureMap<float> to_batch(std::span<const Image> images, const Normalization& norm);

/// Maps a batch of view crops to representations, one column per image.
using EmbedFn = std::function<Matrix<float>(std::span<const Image>)>;

/// (embed(x) + embed(flip x)) / 2 for each crop, one column per crop. Shared by
/// supervisory-representation extraction and test-time features.
Matrix<float> flip_averaged(const EmbedFn& embed, std::span<const Image> crops);

}  // namespace fd

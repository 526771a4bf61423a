#pragma once

#include "fd/layers.hpp"

#include <json.hpp>

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace fd {

/// Any backbone maps a normalized RGB batch to a feature map with spatial
/// stride 16: output extent = ceil(input extent / 16).
struct BackboneSpec {
  /// reference | resnet18 | resnet34 | resnet50 | resnet101 | resnet152 | squeezenet
  std::string kind = "reference";
  /// Reference CNN: channels of the four stride-2 stages.
  std::vector<Index> widths = {16, 32, 64, 128};
  /// Reference CNN: extra stride-1 conv units per stage.
  Index extra_convs = 0;
  /// ResNet / SqueezeNet: width of the first stage (64 reproduces the published nets).
  Index base_width = 64;

  Index out_channels() const;
};

nlohmann::json backbone_to_json(const BackboneSpec& spec);
BackboneSpec backbone_from_json(const nlohmann::json& j);

inline constexpr Index kBackboneStride = 16;

inline Index backbone_extent(Index input) { return (input + kBackboneStride - 1) / kBackboneStride; }

template <typename T>
class Backbone final : public Layer<T> {
 public:
  Backbone(std::unique_ptr<Sequential<T>> net, Index out_channels)
      : net_(std::move(net)), out_channels_(out_channels) {}

  Index out_channels() const { return out_channels_; }

  FeatureMap<T> forward(const FeatureMap<T>& x, bool training) override {
    return net_->forward(x, training);
  }
  FeatureMap<T> backward(const FeatureMap<T>& grad) override { return net_->backward(grad); }
  void collect(ParamList<T>& out) override { net_->collect(out); }

 private:
  std::unique_ptr<Sequential<T>> net_;
  Index out_channels_;
};

namespace detail {

struct ResNetLayout {
  bool bottleneck;
  std::array<Index, 4> blocks;
};

inline ResNetLayout resnet_layout(const std::string& kind) {
  if (kind == "resnet18") return {false, {2, 2, 2, 2}};
  if (kind == "resnet34") return {false, {3, 4, 6, 3}};
  if (kind == "resnet50") return {true, {3, 4, 6, 3}};
  if (kind == "resnet101") return {true, {3, 4, 23, 3}};
  if (kind == "resnet152") return {true, {3, 8, 36, 3}};
  throw ConfigError("unknown backbone kind: " + kind);
}

template <typename T>
std::unique_ptr<Sequential<T>> reference_cnn(const std::string& p, const BackboneSpec& s,
                                             Rng& rng) {
  if (s.widths.size() != 4) throw ConfigError("reference backbone needs four stage widths");
  auto net = std::make_unique<Sequential<T>>();
  Index in = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string stage = p + "stage" + std::to_string(i + 1);
    net->add(conv_bn<T>(stage + ".down", in, s.widths[i], 3, 2, 1, true, rng));
    for (Index e = 0; e < s.extra_convs; ++e)
      net->add(conv_bn<T>(stage + ".conv" + std::to_string(e + 1), s.widths[i], s.widths[i], 3,
                          1, 1, true, rng));
    in = s.widths[i];
  }
  return net;
}

// conv4_1 (first block of the third residual stage) keeps stride 1, giving an
// overall stride of 16 instead of 32.
template <typename T>
std::unique_ptr<Sequential<T>> resnet(const std::string& p, const BackboneSpec& s, Rng& rng) {
  const ResNetLayout layout = resnet_layout(s.kind);
  const Index expansion = layout.bottleneck ? 4 : 1;
  auto net = std::make_unique<Sequential<T>>();
  net->add(conv_bn<T>(p + "conv1", 3, s.base_width, 7, 2, 3, true, rng));
  net->template emplace<MaxPool2d<T>>(3, 2, 1);
  Index in = s.base_width;
  const std::array<Index, 4> strides = {1, 2, 1, 2};
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const Index planes = s.base_width << stage;
    for (Index b = 0; b < layout.blocks[stage]; ++b) {
      const std::string name =
          p + "conv" + std::to_string(stage + 2) + "_" + std::to_string(b + 1);
      const Index stride = b == 0 ? strides[stage] : 1;
      auto body = std::make_unique<Sequential<T>>();
      if (layout.bottleneck) {
        body->add(conv_bn<T>(name + ".a", in, planes, 1, 1, 0, true, rng));
        body->add(conv_bn<T>(name + ".b", planes, planes, 3, stride, 1, true, rng));
        body->add(conv_bn<T>(name + ".c", planes, planes * expansion, 1, 1, 0, false, rng));
      } else {
        body->add(conv_bn<T>(name + ".a", in, planes, 3, stride, 1, true, rng));
        body->add(conv_bn<T>(name + ".b", planes, planes, 3, 1, 1, false, rng));
      }
      std::unique_ptr<Sequential<T>> shortcut;
      if (stride != 1 || in != planes * expansion)
        shortcut = conv_bn<T>(name + ".down", in, planes * expansion, 1, stride, 0, false, rng);
      net->template emplace<Residual<T>>(std::move(body), std::move(shortcut));
      in = planes * expansion;
    }
  }
  return net;
}

// SqueezeNet 1.1 layout; the stem conv and pools are padded so every stage
// halves with ceil, matching the stride-16 contract.
template <typename T>
std::unique_ptr<Sequential<T>> squeezenet(const std::string& p, const BackboneSpec& s, Rng& rng) {
  auto w = [&](Index c) { return std::max<Index>(1, c * s.base_width / 64); };
  auto net = std::make_unique<Sequential<T>>();
  net->add(conv_bn<T>(p + "conv1", 3, w(64), 3, 2, 1, true, rng));
  net->template emplace<MaxPool2d<T>>(3, 2, 1);
  net->template emplace<Fire<T>>(p + "fire2", w(64), w(16), w(64), rng);
  net->template emplace<Fire<T>>(p + "fire3", 2 * w(64), w(16), w(64), rng);
  net->template emplace<MaxPool2d<T>>(3, 2, 1);
  net->template emplace<Fire<T>>(p + "fire4", 2 * w(64), w(32), w(128), rng);
  net->template emplace<Fire<T>>(p + "fire5", 2 * w(128), w(32), w(128), rng);
  net->template emplace<MaxPool2d<T>>(3, 2, 1);
  net->template emplace<Fire<T>>(p + "fire6", 2 * w(128), w(48), w(192), rng);
  net->template emplace<Fire<T>>(p + "fire7", 2 * w(192), w(48), w(192), rng);
  net->template emplace<Fire<T>>(p + "fire8", 2 * w(192), w(64), w(256), rng);
  net->template emplace<Fire<T>>(p + "fire9", 2 * w(256), w(64), w(256), rng);
  return net;
}

}  // namespace detail

template <typename T>
std::unique_ptr<Backbone<T>> make_backbone(const BackboneSpec& spec, const std::string& prefix,
                                           Rng& rng) {
  std::unique_ptr<Sequential<T>> net;
  if (spec.kind == "reference")
    net = detail::reference_cnn<T>(prefix, spec, rng);
  else if (spec.kind == "squeezenet")
    net = detail::squeezenet<T>(prefix, spec, rng);
  else
    net = detail::resnet<T>(prefix, spec, rng);
  return std::make_unique<Backbone<T>>(std::move(net), spec.out_channels());
}

}  // namespace fd

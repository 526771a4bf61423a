#include "fd/models.hpp"

namespace fd {

Index BackboneSpec::out_channels() const {
  if (kind == "reference") return widths.empty() ? 0 : widths.back();
  if (kind == "squeezenet") return 2 * std::max<Index>(1, 256 * base_width / 64);
  const auto layout = detail::resnet_layout(kind);
  return (base_width << 3) * (layout.bottleneck ? 4 : 1);
}

nlohmann::json backbone_to_json(const BackboneSpec& spec) {
  return {{"kind", spec.kind},
          {"widths", spec.widths},
          {"extra_convs", spec.extra_convs},
          {"base_width", spec.base_width}};
}

BackboneSpec backbone_from_json(const nlohmann::json& j) {
  BackboneSpec s;
  s.kind = j.value("kind", s.kind);
  s.widths = j.value("widths", s.widths);
  s.extra_convs = j.value("extra_convs", s.extra_convs);
  s.base_width = j.value("base_width", s.base_width);
  if (s.kind != "reference" && s.kind != "squeezenet") (void)detail::resnet_layout(s.kind);
  return s;
}

template class ViewModel<float>;
template class ViewModel<double>;
template class StudentModel<float>;
template class StudentModel<double>;

}  // namespace fd

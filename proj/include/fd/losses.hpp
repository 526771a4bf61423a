#pragma once

#include "fd/tensor.hpp"
#include "fd/views.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fd {

template <typename T>
struct LossValue {
  T value = T(0);
  Matrix<T> grad;
};

/// Cross-entropy summed over the batch (not averaged). Logits are classes x
/// batch; labels are 0-based class indices.
template <typename T>
LossValue<T> cls_loss(const Matrix<T>& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.cols())
    throw ConfigError("cls_loss: label count does not match batch size");
  LossValue<T> out;
  out.grad.resize(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.cols(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.rows())
      throw ConfigError("cls_loss: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(logits.rows()) + ")");
    const T shift = logits.col(i).maxCoeff();
    const auto e = (logits.col(i).array() - shift).exp().eval();
    const T sum = e.sum();
    out.value += std::log(sum) + shift - logits(y, i);
    out.grad.col(i) = (e / sum).matrix();
    out.grad(y, i) -= T(1);
  }
  return out;
}

template <typename T>
struct RegressionValue {
  T value = T(0);
  Matrix<T> grad;
  Index unmasked = 0;
  bool fully_masked = false;
};

/// (1 / 2N') * sum over kept samples of ||target - pred||^2, where N' is the
/// number of kept samples; 0 when every sample is masked. `keep` may be empty
/// to keep all samples.
template <typename T>
RegressionValue<T> regression_loss(const Matrix<T>& targets, const Matrix<T>& preds,
                                   std::span<const std::uint8_t> keep = {}) {
  if (targets.rows() != preds.rows() || targets.cols() != preds.cols())
    throw ConfigError("regression_loss: target " + std::to_string(targets.rows()) + "x" +
                      std::to_string(targets.cols()) + " vs prediction " +
                      std::to_string(preds.rows()) + "x" + std::to_string(preds.cols()));
  if (!keep.empty() && static_cast<Index>(keep.size()) != preds.cols())
    throw ConfigError("regression_loss: mask size does not match batch size");
  RegressionValue<T> out;
  out.grad = Matrix<T>::Zero(preds.rows(), preds.cols());
  for (Index i = 0; i < preds.cols(); ++i)
    if (keep.empty() || keep[static_cast<std::size_t>(i)]) ++out.unmasked;
  if (out.unmasked == 0) {
    out.fully_masked = true;
    return out;
  }
  const T scale = T(1) / static_cast<T>(out.unmasked);
  for (Index i = 0; i < preds.cols(); ++i) {
    if (!keep.empty() && !keep[static_cast<std::size_t>(i)]) continue;
    const Vector<T> diff = preds.col(i) - targets.col(i);
    out.value += T(0.5) * scale * diff.squaredNorm();
    out.grad.col(i) = scale * diff;
  }
  return out;
}

struct LossWeights {
  double alpha = 4.0;
  double beta = 2.0;
};

template <typename T>
struct TotalLoss {
  T total = T(0);
  T cls = T(0);
  std::vector<T> attr;
  std::vector<T> metric;
  /// d total / d attr^k and d total / d metric^k.
  T attr_scale = T(0);
  T metric_scale = T(0);
};

/// L_cls + (alpha / K) sum_k L_attr^k + (beta / K) sum_k L_metric^k, with K the
/// number of distilled views. Empty attr or metric lists contribute nothing.
template <typename T>
TotalLoss<T> total_loss(T cls, const std::vector<T>& attr, const std::vector<T>& metric,
                        const LossWeights& w, Index views) {
  if (views < 1) throw ConfigError("total_loss: K must be >= 1");
  TotalLoss<T> out;
  out.cls = cls;
  out.attr = attr;
  out.metric = metric;
  out.attr_scale = static_cast<T>(w.alpha) / static_cast<T>(views);
  out.metric_scale = static_cast<T>(w.beta) / static_cast<T>(views);
  T sum_attr = T(0);
  for (T a : attr) sum_attr += a;
  T sum_metric = T(0);
  for (T m : metric) sum_metric += m;
  out.total = cls + out.attr_scale * sum_attr + out.metric_scale * sum_metric;
  return out;
}

/// keep(k, i) is false exactly when random erasing covered more than
/// `threshold` of view k's stripe in sample i.
class ViewMask {
 public:
  ViewMask() = default;
  ViewMask(Index views, Index samples)
      : views_(views), samples_(samples),
        keep_(static_cast<std::size_t>(views * samples), std::uint8_t{1}) {}

  Index views() const { return views_; }
  Index samples() const { return samples_; }
  bool keep(Index view, Index sample) const { return keep_[index(view, sample)] != 0; }
  void set(Index view, Index sample, bool kept) {
    keep_[index(view, sample)] = kept ? std::uint8_t{1} : std::uint8_t{0};
  }
  std::span<const std::uint8_t> row(Index view) const {
    return {keep_.data() + view * samples_, static_cast<std::size_t>(samples_)};
  }
  Index masked_count(Index view) const {
    Index n = 0;
    for (Index i = 0; i < samples_; ++i) n += keep(view, i) ? 0 : 1;
    return n;
  }

 private:
  std::size_t index(Index view, Index sample) const {
    return static_cast<std::size_t>(view * samples_ + sample);
  }
  Index views_ = 0;
  Index samples_ = 0;
  std::vector<std::uint8_t> keep_;
};

inline constexpr double kEraseMaskThreshold = 0.4;

ViewMask make_view_mask(const std::vector<EraseRecord>& erases, const std::vector<ViewSpec>& views,
                        Index height, Index width, double threshold = kEraseMaskThreshold);

}  // namespace fd

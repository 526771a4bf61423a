#pragma once

#include "fd/layers.hpp"

#include <cmath>

namespace fd {

struct SgdOptions {
  double momentum = 0.9;
  /// L2 penalty on conv / FC weights; BN scale and shift are exempt.
  double weight_decay = 0.0005;
  bool nesterov = false;
};

/// Heavy-ball SGD: v <- mu v + (g + wd w);  w <- w - lr v.
template <typename T>
void sgd_step(const ParamList<T>& params, double lr, const SgdOptions& opt) {
  const T mu = static_cast<T>(opt.momentum);
  const T step = static_cast<T>(lr);
  const T wd = static_cast<T>(opt.weight_decay);
  for (Param<T>* p : params) {
    if (!p->trainable) continue;
    Matrix<T> g = p->grad;
    if (p->decay && wd != T(0)) g += wd * p->value;
    p->momentum = mu * p->momentum + g;
    if (opt.nesterov)
      p->value -= step * (g + mu * p->momentum);
    else
      p->value -= step * p->momentum;
  }
}

template <typename T>
void zero_grad(const ParamList<T>& params) {
  for (Param<T>* p : params) p->zero_grad();
}

template <typename T>
bool grads_finite(const ParamList<T>& params) {
  for (const Param<T>* p : params)
    if (!p->grad.allFinite()) return false;
  return true;
}

}  // namespace fd

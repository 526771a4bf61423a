#pragma once

#include "fd/layers.hpp"

namespace fd {

/// FC followed by BN; produces the retrieval representation. The FC has no
/// bias because the BN shift subsumes it.
template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, Index in, Index out, Rng& rng)
      : fc_(name + ".fc", in, out, false, rng), bn_(name + ".bn", out) {}

  Index out_dim() const { return fc_.out_features(); }

  Matrix<T> forward(const Matrix<T>& x, bool training) {
    return bn_.forward(fc_.forward(x), training);
  }
  Matrix<T> backward(const Matrix<T>& grad) { return fc_.backward(bn_.backward(grad)); }
  void collect(ParamList<T>& out) {
    fc_.collect(out);
    bn_.collect(out);
  }
  const BatchNorm<T>& bn() const { return bn_; }

 private:
  Linear<T> fc_;
  BatchNorm<T> bn_;
};

/// Projection into a teacher's representation space; same form as Embedding.
template <typename T>
using Mapping = Embedding<T>;

/// 1x1 conv -> BN -> ReLU selecting view-relevant channels of the backbone map.
template <typename T>
class FeatSelMaps {
 public:
  FeatSelMaps(const std::string& name, Index in, Index out, Rng& rng)
      : conv_(name + ".conv", in, out, 1, 1, 0, false, rng), bn_(name + ".bn", out) {}

  FeatureMap<T> forward(const FeatureMap<T>& f, bool training) {
    FeatureMap<T> h = conv_.forward(f, training);
    h.data = relu_.forward(bn_.forward(h.data, training));
    return h;
  }
  FeatureMap<T> backward(const FeatureMap<T>& grad) {
    FeatureMap<T> g = grad;
    g.data = bn_.backward(relu_.backward(grad.data));
    return conv_.backward(g);
  }
  void collect(ParamList<T>& out) {
    conv_.collect(out);
    bn_.collect(out);
  }

 private:
  Conv2d<T> conv_;
  BatchNorm<T> bn_;
  Relu<T> relu_;
};

/// FC -> BN -> ReLU selecting view-relevant components of a representation.
template <typename T>
class FeatSelVector {
 public:
  FeatSelVector(const std::string& name, Index in, Index out, Rng& rng)
      : fc_(name + ".fc", in, out, false, rng), bn_(name + ".bn", out) {}

  Matrix<T> forward(const Matrix<T>& x, bool training) {
    return relu_.forward(bn_.forward(fc_.forward(x), training));
  }
  Matrix<T> backward(const Matrix<T>& grad) {
    return fc_.backward(bn_.backward(relu_.backward(grad)));
  }
  void collect(ParamList<T>& out) {
    fc_.collect(out);
    bn_.collect(out);
  }

 private:
  Linear<T> fc_;
  BatchNorm<T> bn_;
  Relu<T> relu_;
};

/// Bias-free FC producing identity logits.
template <typename T>
class Classifier {
 public:
  Classifier() = default;
  Classifier(const std::string& name, Index in, Index classes, Rng& rng)
      : fc_(name, in, classes, false, rng, 0.001) {}

  Index classes() const { return fc_.out_features(); }
  Matrix<T> forward(const Matrix<T>& r) { return fc_.forward(r); }
  Matrix<T> backward(const Matrix<T>& grad) { return fc_.backward(grad); }
  void collect(ParamList<T>& out) { fc_.collect(out); }

 private:
  Linear<T> fc_;
};

}  // namespace fd

#pragma once

#include "fd/tensor.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace fd {

/// A named tensor owned by a layer. Running statistics are registered as
/// non-trainable params so checkpoints carry them.
template <typename T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  Matrix<T> momentum;
  bool trainable = true;
  bool decay = true;

  Param() = default;
  Param(std::string n, Matrix<T> v, bool is_trainable = true, bool decays = true)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Matrix<T>::Zero(value.rows(), value.cols())),
        momentum(Matrix<T>::Zero(value.rows(), value.cols())),
        trainable(is_trainable),
        decay(decays) {}

  void zero_grad() { grad.setZero(); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

using Rng = std::mt19937_64;

template <typename T>
Matrix<T> kaiming_normal(Index rows, Index fan_in, Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Matrix<T> m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(dist(rng));
  return m;
}

/// Layer over feature maps, used to compose backbones.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual FeatureMap<T> forward(const FeatureMap<T>& x, bool training) = 0;
  virtual FeatureMap<T> backward(const FeatureMap<T>& grad) = 0;
  virtual void collect(ParamList<T>& /*out*/) {}
};

/// Fully connected map on column vectors: y = W x (+ b).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out, bool bias, Rng& rng,
         double init_std = 0.0)
      : weight_(name + ".weight", Matrix<T>(out, in)) {
    if (init_std > 0.0) {
      std::normal_distribution<double> dist(0.0, init_std);
      for (Index j = 0; j < in; ++j)
        for (Index i = 0; i < out; ++i) weight_.value(i, j) = static_cast<T>(dist(rng));
    } else {
      weight_.value = kaiming_normal<T>(out, in, in, rng);
    }
    if (bias) bias_ = std::make_unique<Param<T>>(name + ".bias", Matrix<T>::Zero(out, 1));
  }

  Index in_features() const { return weight_.value.cols(); }
  Index out_features() const { return weight_.value.rows(); }

  Matrix<T> forward(const Matrix<T>& x) {
    if (x.rows() != in_features())
      throw ConfigError(weight_.name + ": expected input dim " + std::to_string(in_features()) +
                        ", got " + std::to_string(x.rows()));
    input_ = x;
    Matrix<T> y = weight_.value * x;
    if (bias_) y.colwise() += bias_->value.col(0);
    return y;
  }

  Matrix<T> backward(const Matrix<T>& grad) {
    weight_.grad.noalias() += grad * input_.transpose();
    if (bias_) bias_->grad += grad.rowwise().sum();
    return weight_.value.transpose() * grad;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight_);
    if (bias_) out.push_back(bias_.get());
  }

 private:
  Param<T> weight_;
  std::unique_ptr<Param<T>> bias_;
  Matrix<T> input_;
};

/// Batch normalization over the columns of a features x samples matrix.
/// Feature maps use it with rows = channels and columns = every pixel of every
/// sample. Scale and shift are exempt from weight decay.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, Index features, double momentum = 0.1, double eps = 1e-5)
      : gamma_(name + ".weight", Matrix<T>::Ones(features, 1), true, false),
        beta_(name + ".bias", Matrix<T>::Zero(features, 1), true, false),
        running_mean_(name + ".running_mean", Matrix<T>::Zero(features, 1), false, false),
        running_var_(name + ".running_var", Matrix<T>::Ones(features, 1), false, false),
        momentum_(static_cast<T>(momentum)),
        eps_(static_cast<T>(eps)) {}

  Index features() const { return gamma_.value.rows(); }

  Matrix<T> forward(const Matrix<T>& x, bool training) {
    if (x.rows() != features())
      throw ConfigError(gamma_.name + ": feature count mismatch");
    training_ = training;
    const Index m = x.cols();
    Vector<T> mean;
    Vector<T> var;
    if (training) {
      mean = x.rowwise().mean();
      var = (x.colwise() - mean).array().square().rowwise().mean();
      const T unbias = m > 1 ? static_cast<T>(m) / static_cast<T>(m - 1) : T(1);
      running_mean_.value = (T(1) - momentum_) * running_mean_.value + momentum_ * mean;
      running_var_.value = (T(1) - momentum_) * running_var_.value + momentum_ * unbias * var;
    } else {
      mean = running_mean_.value.col(0);
      var = running_var_.value.col(0);
    }
    inv_std_ = (var.array() + eps_).rsqrt().matrix();
    xhat_ = (x.colwise() - mean).array().colwise() * inv_std_.array();
    Matrix<T> y = (xhat_.array().colwise() * gamma_.value.col(0).array()).matrix();
    y.colwise() += beta_.value.col(0);
    return y;
  }

  Matrix<T> backward(const Matrix<T>& grad) {
    gamma_.grad += (grad.array() * xhat_.array()).rowwise().sum().matrix();
    beta_.grad += grad.rowwise().sum();
    const auto dxhat = (grad.array().colwise() * gamma_.value.col(0).array()).eval();
    if (!training_) return (dxhat.colwise() * inv_std_.array()).matrix();
    const T m = static_cast<T>(grad.cols());
    const Vector<T> sum_dxhat = dxhat.rowwise().sum().matrix();
    const Vector<T> sum_dxhat_xhat = (dxhat * xhat_.array()).rowwise().sum().matrix();
    Matrix<T> dx = (m * dxhat).matrix();
    dx.colwise() -= sum_dxhat;
    dx -= (xhat_.array().colwise() * sum_dxhat_xhat.array()).matrix();
    return (dx.array().colwise() * (inv_std_.array() / m)).matrix();
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

  const Param<T>& beta() const { return beta_; }

 private:
  Param<T> gamma_, beta_, running_mean_, running_var_;
  T momentum_ = T(0.1);
  T eps_ = T(1e-5);
  bool training_ = true;
  Vector<T> inv_std_;
  Matrix<T> xhat_;
};

template <typename T>
class Relu {
 public:
  Matrix<T> forward(const Matrix<T>& x) {
    mask_ = (x.array() > T(0)).template cast<T>();
    return (x.array() * mask_.array()).matrix();
  }
  Matrix<T> backward(const Matrix<T>& grad) const {
    return (grad.array() * mask_.array()).matrix();
  }

 private:
  Matrix<T> mask_;
};

/// k x k convolution via im2col. Column row index is (ky * k + kx) * in + c.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(const std::string& name, Index in, Index out, Index kernel, Index stride, Index pad,
         bool bias, Rng& rng)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad),
        weight_(name + ".weight", kaiming_normal<T>(out, in * kernel * kernel,
                                                    in * kernel * kernel, rng)) {
    if (bias) bias_ = std::make_unique<Param<T>>(name + ".bias", Matrix<T>::Zero(out, 1));
  }

  Index out_channels() const { return out_; }
  Index output_extent(Index extent) const { return (extent + 2 * pad_ - k_) / stride_ + 1; }

  FeatureMap<T> forward(const FeatureMap<T>& x, bool /*training*/) override {
    if (x.channels() != in_) throw ConfigError(weight_.name + ": input channel mismatch");
    in_batch_ = x.batch;
    in_h_ = x.height;
    in_w_ = x.width;
    FeatureMap<T> y;
    y.batch = x.batch;
    y.height = output_extent(x.height);
    y.width = output_extent(x.width);
    if (y.height <= 0 || y.width <= 0) throw GeometryError(weight_.name + ": input too small");
    if (pointwise()) {
      cols_ = x.data;
    } else {
      im2col(x, y.height, y.width);
    }
    y.data.noalias() = weight_.value * cols_;
    if (bias_) y.data.colwise() += bias_->value.col(0);
    return y;
  }

  FeatureMap<T> backward(const FeatureMap<T>& grad) override {
    weight_.grad.noalias() += grad.data * cols_.transpose();
    if (bias_) bias_->grad += grad.data.rowwise().sum();
    Matrix<T> dcols = weight_.value.transpose() * grad.data;
    FeatureMap<T> dx;
    dx.batch = in_batch_;
    dx.height = in_h_;
    dx.width = in_w_;
    if (pointwise()) {
      dx.data = std::move(dcols);
    } else {
      dx.data = Matrix<T>::Zero(in_, in_batch_ * in_h_ * in_w_);
      col2im(dcols, grad.height, grad.width, dx);
    }
    return dx;
  }

  void collect(ParamList<T>& out) override {
    out.push_back(&weight_);
    if (bias_) out.push_back(bias_.get());
  }

  Param<T>& weight() { return weight_; }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  void im2col(const FeatureMap<T>& x, Index oh, Index ow) {
    cols_.setZero(in_ * k_ * k_, x.batch * oh * ow);
    for (Index n = 0; n < x.batch; ++n)
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox) {
          const Index col = (n * oh + oy) * ow + ox;
          for (Index ky = 0; ky < k_; ++ky) {
            const Index iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.height) continue;
            for (Index kx = 0; kx < k_; ++kx) {
              const Index ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= x.width) continue;
              cols_.col(col).segment((ky * k_ + kx) * in_, in_) =
                  x.data.col((n * x.height + iy) * x.width + ix);
            }
          }
        }
  }

  void col2im(const Matrix<T>& dcols, Index oh, Index ow, FeatureMap<T>& dx) const {
    for (Index n = 0; n < dx.batch; ++n)
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox) {
          const Index col = (n * oh + oy) * ow + ox;
          for (Index ky = 0; ky < k_; ++ky) {
            const Index iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= dx.height) continue;
            for (Index kx = 0; kx < k_; ++kx) {
              const Index ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= dx.width) continue;
              dx.data.col((n * dx.height + iy) * dx.width + ix) +=
                  dcols.col(col).segment((ky * k_ + kx) * in_, in_);
            }
          }
        }
  }

  Index in_, out_, k_, stride_, pad_;
  Param<T> weight_;
  std::unique_ptr<Param<T>> bias_;
  Matrix<T> cols_;
  Index in_batch_ = 0, in_h_ = 0, in_w_ = 0;
};

template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  BatchNorm2d(const std::string& name, Index channels) : bn_(name, channels) {}
  FeatureMap<T> forward(const FeatureMap<T>& x, bool training) override {
    FeatureMap<T> y = x;
    y.data = bn_.forward(x.data, training);
    return y;
  }
  FeatureMap<T> backward(const FeatureMap<T>& grad) override {
    FeatureMap<T> dx = grad;
    dx.data = bn_.backward(grad.data);
    return dx;
  }
  void collect(ParamList<T>& out) override { bn_.collect(out); }

 private:
  BatchNorm<T> bn_;
};

template <typename T>
class Relu2d final : public Layer<T> {
 public:
  FeatureMap<T> forward(const FeatureMap<T>& x, bool /*training*/) override {
    FeatureMap<T> y = x;
    y.data = relu_.forward(x.data);
    return y;
  }
  FeatureMap<T> backward(const FeatureMap<T>& grad) override {
    FeatureMap<T> dx = grad;
    dx.data = relu_.backward(grad.data);
    return dx;
  }

 private:
  Relu<T> relu_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(Index kernel, Index stride, Index pad) : k_(kernel), stride_(stride), pad_(pad) {}

  FeatureMap<T> forward(const FeatureMap<T>& x, bool /*training*/) override {
    in_h_ = x.height;
    in_w_ = x.width;
    FeatureMap<T> y(x.batch, x.channels(), (x.height + 2 * pad_ - k_) / stride_ + 1,
                    (x.width + 2 * pad_ - k_) / stride_ + 1);
    argmax_.assign(static_cast<std::size_t>(y.data.size()), 0);
    for (Index n = 0; n < x.batch; ++n)
      for (Index oy = 0; oy < y.height; ++oy)
        for (Index ox = 0; ox < y.width; ++ox) {
          const Index ocol = (n * y.height + oy) * y.width + ox;
          for (Index c = 0; c < x.channels(); ++c) {
            T best = -std::numeric_limits<T>::infinity();
            Index arg = -1;
            for (Index ky = 0; ky < k_; ++ky) {
              const Index iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= x.height) continue;
              for (Index kx = 0; kx < k_; ++kx) {
                const Index ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= x.width) continue;
                const Index icol = (n * x.height + iy) * x.width + ix;
                if (arg < 0 || x.data(c, icol) > best) {
                  best = x.data(c, icol);
                  arg = icol;
                }
              }
            }
            y.data(c, ocol) = best;
            argmax_[static_cast<std::size_t>(ocol * x.channels() + c)] = arg;
          }
        }
    return y;
  }

  FeatureMap<T> backward(const FeatureMap<T>& grad) override {
    FeatureMap<T> dx(grad.batch, grad.channels(), in_h_, in_w_);
    for (Index col = 0; col < grad.data.cols(); ++col)
      for (Index c = 0; c < grad.channels(); ++c)
        dx.data(c, argmax_[static_cast<std::size_t>(col * grad.channels() + c)]) +=
            grad.data(c, col);
    return dx;
  }

 private:
  Index k_, stride_, pad_;
  Index in_h_ = 0, in_w_ = 0;
  std::vector<Index> argmax_;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential& add(std::unique_ptr<Layer<T>> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  FeatureMap<T> forward(const FeatureMap<T>& x, bool training) override {
    FeatureMap<T> h = x;
    for (auto& l : layers_) h = l->forward(h, training);
    return h;
  }
  FeatureMap<T> backward(const FeatureMap<T>& grad) override {
    FeatureMap<T> g = grad;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }
  void collect(ParamList<T>& out) override {
    for (auto& l : layers_) l->collect(out);
  }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// conv -> BN -> ReLU (ReLU optional), the unit every backbone is built from.
template <typename T>
std::unique_ptr<Sequential<T>> conv_bn(const std::string& name, Index in, Index out, Index k,
                                       Index stride, Index pad, bool relu, Rng& rng) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->template emplace<Conv2d<T>>(name + ".conv", in, out, k, stride, pad, false, rng);
  seq->template emplace<BatchNorm2d<T>>(name + ".bn", out);
  if (relu) seq->template emplace<Relu2d<T>>();
  return seq;
}

/// y = relu(body(x) + shortcut(x)); an empty shortcut is the identity.
template <typename T>
class Residual final : public Layer<T> {
 public:
  Residual(std::unique_ptr<Sequential<T>> body, std::unique_ptr<Sequential<T>> shortcut)
      : body_(std::move(body)), shortcut_(std::move(shortcut)) {}

  FeatureMap<T> forward(const FeatureMap<T>& x, bool training) override {
    FeatureMap<T> y = body_->forward(x, training);
    if (shortcut_ && !shortcut_->empty())
      y.data += shortcut_->forward(x, training).data;
    else
      y.data += x.data;
    y.data = relu_.forward(y.data);
    return y;
  }

  FeatureMap<T> backward(const FeatureMap<T>& grad) override {
    FeatureMap<T> g = grad;
    g.data = relu_.backward(grad.data);
    FeatureMap<T> dx = body_->backward(g);
    if (shortcut_ && !shortcut_->empty())
      dx.data += shortcut_->backward(g).data;
    else
      dx.data += g.data;
    return dx;
  }

  void collect(ParamList<T>& out) override {
    body_->collect(out);
    if (shortcut_) shortcut_->collect(out);
  }

 private:
  std::unique_ptr<Sequential<T>> body_;
  std::unique_ptr<Sequential<T>> shortcut_;
  Relu<T> relu_;
};

/// SqueezeNet fire module: squeeze 1x1, then concatenated 1x1 and 3x3 expands.
template <typename T>
class Fire final : public Layer<T> {
 public:
  Fire(const std::string& name, Index in, Index squeeze, Index expand, Rng& rng)
      : squeeze_(conv_bn<T>(name + ".squeeze", in, squeeze, 1, 1, 0, true, rng)),
        expand1_(conv_bn<T>(name + ".expand1x1", squeeze, expand, 1, 1, 0, true, rng)),
        expand3_(conv_bn<T>(name + ".expand3x3", squeeze, expand, 3, 1, 1, true, rng)),
        expand_(expand) {}

  FeatureMap<T> forward(const FeatureMap<T>& x, bool training) override {
    const FeatureMap<T> s = squeeze_->forward(x, training);
    const FeatureMap<T> a = expand1_->forward(s, training);
    const FeatureMap<T> b = expand3_->forward(s, training);
    FeatureMap<T> y;
    y.batch = a.batch;
    y.height = a.height;
    y.width = a.width;
    y.data.resize(a.channels() + b.channels(), a.data.cols());
    y.data << a.data, b.data;
    return y;
  }

  FeatureMap<T> backward(const FeatureMap<T>& grad) override {
    FeatureMap<T> ga = grad;
    ga.data = grad.data.topRows(expand_);
    FeatureMap<T> gb = grad;
    gb.data = grad.data.bottomRows(expand_);
    FeatureMap<T> ds = expand1_->backward(ga);
    ds.data += expand3_->backward(gb).data;
    return squeeze_->backward(ds);
  }

  void collect(ParamList<T>& out) override {
    squeeze_->collect(out);
    expand1_->collect(out);
    expand3_->collect(out);
  }

 private:
  std::unique_ptr<Sequential<T>> squeeze_, expand1_, expand3_;
  Index expand_;
};

}  // namespace fd

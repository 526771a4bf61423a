#pragma once

#include "fd/tensor.hpp"

#include <algorithm>
#include <vector>

namespace fd {

/// Per-channel global max over spatial positions. Result is channels x batch.
template <typename T>
Matrix<T> global_max_pool(const FeatureMap<T>& f) {
  Matrix<T> out(f.channels(), f.batch);
  for (Index n = 0; n < f.batch; ++n) out.col(n) = f.sample(n).rowwise().maxCoeff();
  return out;
}

/// Per-channel global average over spatial positions. Result is channels x batch.
template <typename T>
Matrix<T> global_avg_pool(const FeatureMap<T>& f) {
  Matrix<T> out(f.channels(), f.batch);
  for (Index n = 0; n < f.batch; ++n) out.col(n) = f.sample(n).rowwise().mean();
  return out;
}

/// Stabilized global max pooling: a stride-1, unpadded m x m average pool
/// followed by a global max. The kernel is clamped per axis to the map size, so
/// m = 1 is plain GMP and a kernel covering the map is plain GAP.
///
/// Backward routes each channel's gradient uniformly over the winning window;
/// ties go to the first window in row-major order.
template <typename T>
class StabilizedGmp {
 public:
  explicit StabilizedGmp(Index m = 4) : m_(m) {
    if (m < 1) throw ConfigError("pooling kernel must be >= 1");
  }

  Index kernel() const { return m_; }

  Matrix<T> forward(const FeatureMap<T>& f) {
    if (f.empty() || f.height <= 0 || f.width <= 0)
      throw GeometryError("stabilized GMP on an empty feature map");
    batch_ = f.batch;
    channels_ = f.channels();
    height_ = f.height;
    width_ = f.width;
    kh_ = std::min(m_, f.height);
    kw_ = std::min(m_, f.width);
    const Index oh = f.height - kh_ + 1;
    const Index ow = f.width - kw_ + 1;
    const T inv = T(1) / static_cast<T>(kh_ * kw_);

    Matrix<T> out(channels_, batch_);
    winner_.assign(static_cast<std::size_t>(channels_ * batch_), 0);
    Vector<T> window(channels_);
    for (Index n = 0; n < batch_; ++n) {
      const auto s = f.sample(n);
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
          window.setZero();
          for (Index dy = 0; dy < kh_; ++dy)
            for (Index dx = 0; dx < kw_; ++dx) window += s.col((oy + dy) * width_ + ox + dx);
          window *= inv;
          const Index pos = oy * width_ + ox;
          for (Index c = 0; c < channels_; ++c) {
            if ((oy == 0 && ox == 0) || window(c) > out(c, n)) {
              out(c, n) = window(c);
              winner_[static_cast<std::size_t>(n * channels_ + c)] = pos;
            }
          }
        }
      }
    }
    return out;
  }

  FeatureMap<T> backward(const Matrix<T>& grad) const {
    FeatureMap<T> g(batch_, channels_, height_, width_);
    const T inv = T(1) / static_cast<T>(kh_ * kw_);
    for (Index n = 0; n < batch_; ++n) {
      for (Index c = 0; c < channels_; ++c) {
        const Index pos = winner_[static_cast<std::size_t>(n * channels_ + c)];
        const Index y0 = pos / width_;
        const Index x0 = pos % width_;
        const T share = grad(c, n) * inv;
        for (Index dy = 0; dy < kh_; ++dy)
          for (Index dx = 0; dx < kw_; ++dx) g(n, c, y0 + dy, x0 + dx) += share;
      }
    }
    return g;
  }

 private:
  Index m_;
  Index batch_ = 0, channels_ = 0, height_ = 0, width_ = 0, kh_ = 1, kw_ = 1;
  std::vector<Index> winner_;
};

template <typename T>
Matrix<T> stabilized_gmp(const FeatureMap<T>& f, Index m) {
  StabilizedGmp<T> pool(m);
  return pool.forward(f);
}

}  // namespace fd

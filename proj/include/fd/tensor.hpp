#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace fd {

using Index = Eigen::Index;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// A batch of multi-channel spatial maps stored as one dense matrix.
///
/// Rows are channels. Column `(n * height + y) * width + x` holds the channel
/// vector of pixel (y, x) in sample n, so a whole batch feeds a single GEMM
/// and batch normalization reduces over columns.
template <typename T>
struct FeatureMap {
  Index batch = 0;
  Index height = 0;
  Index width = 0;
  Matrix<T> data;

  FeatureMap() = default;
  FeatureMap(Index n, Index c, Index h, Index w)
      : batch(n), height(h), width(w), data(Matrix<T>::Zero(c, n * h * w)) {}

  Index channels() const { return data.rows(); }
  Index plane() const { return height * width; }
  bool empty() const { return data.size() == 0; }

  T& operator()(Index n, Index c, Index y, Index x) {
    return data(c, (n * height + y) * width + x);
  }
  T operator()(Index n, Index c, Index y, Index x) const {
    return data(c, (n * height + y) * width + x);
  }

  auto sample(Index n) { return data.middleCols(n * plane(), plane()); }
  auto sample(Index n) const { return data.middleCols(n * plane(), plane()); }

  template <typename U>
  FeatureMap<U> cast() const {
    FeatureMap<U> out;
    out.batch = batch;
    out.height = height;
    out.width = width;
    out.data = data.template cast<U>();
    return out;
  }
};

template <typename T>
bool same_shape(const FeatureMap<T>& a, const FeatureMap<T>& b) {
  return a.batch == b.batch && a.height == b.height && a.width == b.width &&
         a.channels() == b.channels();
}

/// RGB image with values in [0, 1]; pixels(c, y * width + x).
struct Image {
  Index height = 0;
  Index width = 0;
  Matrix<float> pixels;

  Image() = default;
  Image(Index h, Index w, Index channels = 3)
      : height(h), width(w), pixels(Matrix<float>::Zero(channels, h * w)) {}

  Index channels() const { return pixels.rows(); }
  float& operator()(Index c, Index y, Index x) { return pixels(c, y * width + x); }
  float operator()(Index c, Index y, Index x) const { return pixels(c, y * width + x); }

  friend bool operator==(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
  }
};

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fd

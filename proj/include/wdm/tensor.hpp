#pragma once

#include <Eigen/Core>

#include "wdm/errors.hpp"

namespace wdm {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Channel-major feature map: one row per channel, each row a row-major
/// height x width plane. This is the layout every network layer consumes.
template <typename Scalar>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  Mat<Scalar> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(Mat<Scalar>::Zero(c, h * w)) {}

  static Tensor zeros(int c, int h, int w) { return Tensor(c, h, w); }

  int pixels() const { return height * width; }
  Eigen::Index size() const { return data.size(); }

  Scalar& at(int c, int y, int x) { return data(c, y * width + x); }
  Scalar at(int c, int y, int x) const { return data(c, y * width + x); }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.data = data.template cast<Other>();
    return out;
  }
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": tensor shape mismatch");
}

/// Stacks the channels of `a` on top of those of `b`.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.height != b.height || a.width != b.width)
    throw DimensionError("concat_channels: spatial dims differ");
  Tensor<Scalar> out(a.channels + b.channels, a.height, a.width);
  out.data.topRows(a.channels) = a.data;
  out.data.bottomRows(b.channels) = b.data;
  return out;
}

}  // namespace wdm

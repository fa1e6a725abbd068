#pragma once

// Orthonormal 2-D Haar transform.
//
// For every 2x2 block [[a, b], [c, d]] (a top-left, d bottom-right) one
// analysis step produces four sub-band planes in the fixed order
//
//   A = (a + b + c + d) / 2     approximation
//   V = (a - b + c - d) / 2     vertical detail   (changes along x)
//   H = (a + b - c - d) / 2     horizontal detail (changes along y)
//   D = (a - b - c + d) / 2     diagonal detail
//
// The analysis matrix is symmetric and orthogonal, so synthesis applies the
// same matrix again. Level L repeats the step on every plane, giving 4^L
// planes of size (H / 2^L) x (W / 2^L). Channel k of level L expands into
// channels 4k .. 4k+3 of level L+1, so channel 0 is the only pure
// approximation plane at every level.

#include <string>
#include <vector>

#include "wdm/grid.hpp"
#include "wdm/tensor.hpp"

namespace wdm {

template <typename Scalar>
struct CoeffTensor {
  int level = 0;
  int base_height = 0;
  int base_width = 0;
  Tensor<Scalar> bands;

  int channels() const { return bands.channels; }
};

constexpr int pow4(int level) { return level <= 0 ? 1 : 4 * pow4(level - 1); }

/// One Haar analysis step applied to every channel: C x H x W -> 4C x H/2 x W/2.
template <typename Scalar>
Tensor<Scalar> haar_analysis(const Tensor<Scalar>& in) {
  if (in.height % 2 != 0 || in.width % 2 != 0) throw DimensionError("haar_analysis: odd dimensions");
  const int h2 = in.height / 2, w2 = in.width / 2;
  Tensor<Scalar> out(in.channels * 4, h2, w2);
  const Scalar half = Scalar(0.5);
  for (int c = 0; c < in.channels; ++c) {
    for (int i = 0; i < h2; ++i) {
      for (int j = 0; j < w2; ++j) {
        const Scalar a = in.at(c, 2 * i, 2 * j), b = in.at(c, 2 * i, 2 * j + 1);
        const Scalar cc = in.at(c, 2 * i + 1, 2 * j), d = in.at(c, 2 * i + 1, 2 * j + 1);
        out.at(4 * c + 0, i, j) = half * (a + b + cc + d);
        out.at(4 * c + 1, i, j) = half * (a - b + cc - d);
        out.at(4 * c + 2, i, j) = half * (a + b - cc - d);
        out.at(4 * c + 3, i, j) = half * (a - b - cc + d);
      }
    }
  }
  return out;
}

/// Inverse of haar_analysis: 4C x h x w -> C x 2h x 2w.
template <typename Scalar>
Tensor<Scalar> haar_synthesis(const Tensor<Scalar>& in) {
  if (in.channels % 4 != 0) throw FormatError("haar_synthesis: channel count not a multiple of 4");
  Tensor<Scalar> out(in.channels / 4, in.height * 2, in.width * 2);
  const Scalar half = Scalar(0.5);
  for (int c = 0; c < out.channels; ++c) {
    for (int i = 0; i < in.height; ++i) {
      for (int j = 0; j < in.width; ++j) {
        const Scalar A = in.at(4 * c, i, j), V = in.at(4 * c + 1, i, j);
        const Scalar H = in.at(4 * c + 2, i, j), D = in.at(4 * c + 3, i, j);
        out.at(c, 2 * i, 2 * j) = half * (A + V + H + D);
        out.at(c, 2 * i, 2 * j + 1) = half * (A - V + H - D);
        out.at(c, 2 * i + 1, 2 * j) = half * (A + V - H - D);
        out.at(c, 2 * i + 1, 2 * j + 1) = half * (A - V - H + D);
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> field_to_tensor(const Field<Scalar>& field) {
  Tensor<Scalar> t(1, field.height(), field.width());
  t.data.row(0) = Eigen::Map<const Vec<Scalar>>(field.values.data(), field.size()).transpose();
  return t;
}

template <typename Scalar>
Field<Scalar> tensor_to_field(const Tensor<Scalar>& t, Scalar value_max = Scalar(80)) {
  if (t.channels != 1) throw FormatError("tensor_to_field: expected a single channel");
  Plane<Scalar> v(t.height, t.width);
  Eigen::Map<Vec<Scalar>>(v.data(), v.size()) = t.data.row(0).transpose();
  return Field<Scalar>(std::move(v), value_max);
}

template <typename Scalar>
CoeffTensor<Scalar> dwt2_multi(const Field<Scalar>& field, int levels) {
  if (levels < 1) throw ArgumentError("dwt2_multi: levels must be >= 1");
  const int div = 1 << levels;
  if (field.height() % div != 0 || field.width() % div != 0)
    throw DimensionError("dwt2_multi: dims not divisible by 2^levels");
  CoeffTensor<Scalar> out{levels, field.height(), field.width(), field_to_tensor(field)};
  for (int l = 0; l < levels; ++l) out.bands = haar_analysis(out.bands);
  return out;
}

template <typename Scalar>
CoeffTensor<Scalar> dwt2(const Field<Scalar>& field) {
  if (field.height() % 2 != 0 || field.width() % 2 != 0) throw DimensionError("dwt2: odd dimensions");
  return dwt2_multi(field, 1);
}

template <typename Scalar>
void validate_coeffs(const CoeffTensor<Scalar>& c) {
  if (c.level < 0) throw FormatError("coefficients: negative level");
  const int div = 1 << c.level;
  if (c.bands.channels != pow4(c.level)) throw FormatError("coefficients: channel count != 4^level");
  if (c.base_height != c.bands.height * div || c.base_width != c.bands.width * div)
    throw FormatError("coefficients: plane shape inconsistent with base dims");
  if (c.bands.data.rows() != c.bands.channels || c.bands.data.cols() != c.bands.pixels())
    throw FormatError("coefficients: storage shape inconsistent");
}

template <typename Scalar>
Field<Scalar> idwt2_multi(const CoeffTensor<Scalar>& coeffs) {
  validate_coeffs(coeffs);
  Tensor<Scalar> t = coeffs.bands;
  for (int l = 0; l < coeffs.level; ++l) t = haar_synthesis(t);
  return tensor_to_field(t);
}

template <typename Scalar>
Field<Scalar> idwt2(const CoeffTensor<Scalar>& coeffs) {
  if (coeffs.level != 1) throw FormatError("idwt2: expected level-1 coefficients");
  return idwt2_multi(coeffs);
}

/// Maps pixel fields into the domain the diffusion model works in:
/// level 0 is the identity (pixel-space model), level L >= 1 is Haar-L.
struct DomainTransform {
  int level = 0;

  static DomainTransform identity() { return {0}; }
  static DomainTransform haar(int levels) { return {levels}; }

  static DomainTransform parse(const std::string& name) {
    if (name == "identity" || name == "pixel") return identity();
    if (name.rfind("haar-", 0) == 0) {
      const int l = std::stoi(name.substr(5));
      if (l >= 1 && l <= 4) return haar(l);
    }
    throw ArgumentError("unknown transform '" + name + "' (expected identity|haar-1|haar-2)");
  }

  std::string name() const { return level == 0 ? "identity" : "haar-" + std::to_string(level); }
  int channels() const { return pow4(level); }
  int divisor() const { return 1 << level; }

  /// Channels that carry detail coefficients (everything but channel 0).
  std::vector<int> detail_channels() const {
    std::vector<int> out;
    if (level == 0) return out;
    for (int c = 1; c < channels(); ++c) out.push_back(c);
    return out;
  }

  void check_dims(int h, int w) const {
    if (h % divisor() != 0 || w % divisor() != 0)
      throw DimensionError("transform " + name() + ": dims not divisible by " + std::to_string(divisor()));
  }

  template <typename Scalar>
  CoeffTensor<Scalar> forward(const Field<Scalar>& field) const {
    check_dims(field.height(), field.width());
    if (level == 0) return {0, field.height(), field.width(), field_to_tensor(field)};
    return dwt2_multi(field, level);
  }

  template <typename Scalar>
  Field<Scalar> inverse(const CoeffTensor<Scalar>& coeffs) const {
    if (coeffs.level != level) throw FormatError("transform " + name() + ": level mismatch");
    return idwt2_multi(coeffs);
  }
};

}  // namespace wdm

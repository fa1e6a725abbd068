#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "wdm/errors.hpp"

namespace wdm {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A rectangular raster of reflectivity values in dBZ.
template <typename Scalar>
struct Field {
  Plane<Scalar> values;
  Scalar value_max = Scalar(80);

  Field() = default;
  explicit Field(Plane<Scalar> v, Scalar vmax = Scalar(80)) : values(std::move(v)), value_max(vmax) {}

  static Field zeros(int h, int w) { return Field(Plane<Scalar>::Zero(h, w)); }
  static Field constant(int h, int w, Scalar c) { return Field(Plane<Scalar>::Constant(h, w, c)); }

  int height() const { return static_cast<int>(values.rows()); }
  int width() const { return static_cast<int>(values.cols()); }
  Eigen::Index size() const { return values.size(); }

  bool all_finite() const { return values.allFinite(); }
};

using GridField = Field<float>;

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

/// HR target paired with its block-averaged LR observation.
struct PairSample {
  GridField hr;
  GridField lr;
  int factor = 1;
};

template <typename Scalar>
Field<Scalar> block_average_downsample(const Field<Scalar>& field, int factor) {
  if (factor < 1) throw ArgumentError("block_average_downsample: factor must be positive");
  if (field.height() % factor != 0 || field.width() % factor != 0)
    throw DimensionError("block_average_downsample: dims not divisible by factor");
  const int oh = field.height() / factor;
  const int ow = field.width() / factor;
  Plane<Scalar> out(oh, ow);
  const double inv = 1.0 / (double(factor) * factor);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int y = 0; y < factor; ++y)
        for (int x = 0; x < factor; ++x) acc += field.values(i * factor + y, j * factor + x);
      out(i, j) = static_cast<Scalar>(acc * inv);
    }
  }
  return Field<Scalar>(std::move(out), field.value_max);
}

namespace detail {

// Cubic convolution kernel with sharpness a.
inline double cubic_weight(double x, double a) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct CubicTap {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

// Half-pixel-centred source taps for every output coordinate, border replicated.
inline std::vector<CubicTap> cubic_taps(int in_size, int factor, double a) {
  std::vector<CubicTap> taps(static_cast<std::size_t>(in_size) * factor);
  for (int o = 0; o < in_size * factor; ++o) {
    const double src = (o + 0.5) / factor - 0.5;
    const int base = static_cast<int>(std::floor(src));
    const double frac = src - base;
    CubicTap& tap = taps[o];
    for (int k = 0; k < 4; ++k) {
      tap.index[k] = std::clamp(base - 1 + k, 0, in_size - 1);
      tap.weight[k] = cubic_weight(frac - (k - 1), a);
    }
  }
  return taps;
}

}  // namespace detail

inline constexpr double kBicubicSharpness = -0.75;

/// Separable bicubic upsampling; reproduces source samples wherever an
/// output centre lands exactly on a source centre (odd factors).
template <typename Scalar>
Field<Scalar> bicubic_upsample(const Field<Scalar>& field, int factor, double a = kBicubicSharpness) {
  if (factor < 1) throw ArgumentError("bicubic_upsample: factor must be >= 1");
  if (factor == 1) return field;
  const int h = field.height(), w = field.width();
  const auto ty = detail::cubic_taps(h, factor, a);
  const auto tx = detail::cubic_taps(w, factor, a);

  Eigen::ArrayXXd rows(h, w * factor);
  for (int i = 0; i < h; ++i)
    for (int o = 0; o < w * factor; ++o) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tx[o].weight[k] * double(field.values(i, tx[o].index[k]));
      rows(i, o) = acc;
    }
  Plane<Scalar> out(h * factor, w * factor);
  for (int o = 0; o < h * factor; ++o)
    for (int j = 0; j < w * factor; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += ty[o].weight[k] * rows(ty[o].index[k], j);
      out(o, j) = static_cast<Scalar>(acc);
    }
  return Field<Scalar>(std::move(out), field.value_max);
}

template <typename Scalar>
Field<Scalar> normalize(const Field<Scalar>& field, const NormStats& stats) {
  if (!(stats.std > 0.0)) throw ArgumentError("normalize: std must be positive");
  Plane<Scalar> v = ((field.values.template cast<double>() - stats.mean) / stats.std).template cast<Scalar>();
  return Field<Scalar>(std::move(v), field.value_max);
}

template <typename Scalar>
Field<Scalar> denormalize(const Field<Scalar>& field, const NormStats& stats) {
  if (!(stats.std > 0.0)) throw ArgumentError("denormalize: std must be positive");
  Plane<Scalar> v = (field.values.template cast<double>() * stats.std + stats.mean).template cast<Scalar>();
  return Field<Scalar>(std::move(v), field.value_max);
}

template <typename Scalar>
Field<Scalar> clip(const Field<Scalar>& field, Scalar lo, Scalar hi) {
  return Field<Scalar>(field.values.max(lo).min(hi), field.value_max);
}

/// True iff the fraction of strictly positive pixels reaches `min_fraction`.
template <typename Scalar>
bool passes_event_filter(const Field<Scalar>& field, double min_fraction) {
  if (field.size() == 0) return false;
  const auto wet = (field.values > Scalar(0)).count();
  return static_cast<double>(wet) >= min_fraction * static_cast<double>(field.size());
}

/// Mean and standard deviation over every pixel of every field.
template <typename Scalar>
NormStats compute_norm_stats(std::span<const Field<Scalar>> fields) {
  double n = 0.0, sum = 0.0;
  for (const auto& f : fields) {
    sum += f.values.template cast<double>().sum();
    n += static_cast<double>(f.size());
  }
  if (n == 0.0) throw ArgumentError("compute_norm_stats: no pixels");
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& f : fields) ss += (f.values.template cast<double>() - mean).square().sum();
  NormStats stats{mean, std::sqrt(ss / n)};
  if (!(stats.std > 0.0)) stats.std = 1.0;
  return stats;
}

template <typename Scalar>
Field<Scalar> center_crop(const Field<Scalar>& field, int h, int w) {
  if (h > field.height() || w > field.width()) throw DimensionError("center_crop: crop larger than field");
  const int y0 = (field.height() - h) / 2;
  const int x0 = (field.width() - w) / 2;
  return Field<Scalar>(field.values.block(y0, x0, h, w), field.value_max);
}

}  // namespace wdm

#pragma once

// Forward/backward primitives. Every backward() accumulates parameter
// gradients into `grad` (same layout as the parameter vector) and returns
// the gradient with respect to the layer input.

#include <algorithm>
#include <cmath>
#include <string>

#include "wdm/nn/params.hpp"

namespace wdm::nn {

enum class Padding { kZero, kPeriodic };

// ---------------------------------------------------------------- activations

template <typename Derived>
typename Derived::PlainObject silu(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return (x.array() / (S(1) + (-x.array()).exp())).matrix();
}

template <typename D1, typename D2>
typename D1::PlainObject silu_backward(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& dy) {
  using S = typename D1::Scalar;
  const auto sig = (S(1) / (S(1) + (-x.array()).exp())).eval();
  return (dy.array() * sig * (S(1) + x.array() * (S(1) - sig))).matrix();
}

template <typename Scalar>
Tensor<Scalar> silu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y = x;
  y.data = silu(x.data);
  return y;
}

template <typename Scalar>
Tensor<Scalar> silu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx = x;
  dx.data = silu_backward(x.data, dy.data);
  return dx;
}

// -------------------------------------------------------------------- conv2d

/// Square-kernel 2-D convolution (kernel 1 or 3) with "same" padding and
/// stride 1 or 2, lowered to a GEMM over an im2col buffer.
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  Padding padding = Padding::kZero;
  ParamSlot weight;  // out x (in * k * k)
  ParamSlot bias;    // out x 1

  Conv2d() = default;
  Conv2d(ParamLayout& layout, const std::string& name, int cin, int cout, int k, int s, Padding pad,
         bool zero_init = false)
      : in_channels(cin), out_channels(cout), kernel(k), stride(s), padding(pad) {
    weight = layout.add(name + ".weight", cout, cin * k * k, zero_init ? Init::kZeroOutput : Init::kFanIn,
                        cin * k * k);
    bias = layout.add(name + ".bias", cout, 1, Init::kZero);
  }

  int out_size(int n) const { return (n + stride - 1) / stride; }

  template <typename Scalar>
  Mat<Scalar> im2col(const Tensor<Scalar>& x) const {
    const int oh = out_size(x.height), ow = out_size(x.width);
    const int pad = kernel / 2;
    Mat<Scalar> col(static_cast<Eigen::Index>(in_channels) * kernel * kernel, static_cast<Eigen::Index>(oh) * ow);
    for (int c = 0; c < in_channels; ++c) {
      const Scalar* src = x.data.row(c).data();
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          Scalar* dst = col.row((static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx).data();
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride + ky - pad;
            Scalar* drow = dst + static_cast<Eigen::Index>(oy) * ow;
            if (iy < 0 || iy >= x.height) {
              if (padding == Padding::kZero) {
                std::fill(drow, drow + ow, Scalar(0));
                continue;
              }
              iy = (iy + x.height) % x.height;
            }
            const Scalar* srow = src + static_cast<Eigen::Index>(iy) * x.width;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= x.width) {
                if (padding == Padding::kZero) {
                  drow[ox] = Scalar(0);
                  continue;
                }
                ix = (ix + x.width) % x.width;
              }
              drow[ox] = srow[ix];
            }
          }
        }
      }
    }
    return col;
  }

  template <typename Scalar>
  void col2im(const Mat<Scalar>& col, Tensor<Scalar>& dx) const {
    const int oh = out_size(dx.height), ow = out_size(dx.width);
    const int pad = kernel / 2;
    for (int c = 0; c < in_channels; ++c) {
      Scalar* dst = dx.data.row(c).data();
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          const Scalar* src = col.row((static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx).data();
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= dx.height) {
              if (padding == Padding::kZero) continue;
              iy = (iy + dx.height) % dx.height;
            }
            const Scalar* srow = src + static_cast<Eigen::Index>(oy) * ow;
            Scalar* drow = dst + static_cast<Eigen::Index>(iy) * dx.width;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= dx.width) {
                if (padding == Padding::kZero) continue;
                ix = (ix + dx.width) % dx.width;
              }
              drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }

  template <typename Scalar>
  Tensor<Scalar> forward(const Vec<Scalar>& p, const Tensor<Scalar>& x) const {
    if (x.channels != in_channels) throw DimensionError("conv2d: input channel mismatch");
    Tensor<Scalar> y(out_channels, out_size(x.height), out_size(x.width));
    if (kernel == 1 && stride == 1) {
      y.data.noalias() = view(p, weight) * x.data;
    } else {
      y.data.noalias() = view(p, weight) * im2col(x);
    }
    y.data.colwise() += view(p, bias).col(0);
    return y;
  }

  template <typename Scalar>
  Tensor<Scalar> backward(const Vec<Scalar>& p, Vec<Scalar>& grad, const Tensor<Scalar>& x,
                          const Tensor<Scalar>& dy) const {
    view(grad, bias).col(0) += dy.data.rowwise().sum();
    Tensor<Scalar> dx(x.channels, x.height, x.width);
    if (kernel == 1 && stride == 1) {
      view(grad, weight).noalias() += dy.data * x.data.transpose();
      dx.data.noalias() = view(p, weight).transpose() * dy.data;
    } else {
      const Mat<Scalar> col = im2col(x);
      view(grad, weight).noalias() += dy.data * col.transpose();
      const Mat<Scalar> dcol = view(p, weight).transpose() * dy.data;
      col2im(dcol, dx);
    }
    return dx;
  }
};

// ----------------------------------------------------------------- groupnorm

struct GroupNorm {
  int channels = 0;
  int groups = 1;
  ParamSlot gamma;  // channels x 1
  ParamSlot beta;   // channels x 1
  static constexpr double kEps = 1e-5;

  GroupNorm() = default;
  GroupNorm(ParamLayout& layout, const std::string& name, int c, int g) : channels(c), groups(std::min(g, c)) {
    if (c % groups != 0) throw ArgumentError(name + ": channels " + std::to_string(c) + " not divisible by groups");
    gamma = layout.add(name + ".gamma", c, 1, Init::kOne);
    beta = layout.add(name + ".beta", c, 1, Init::kZero);
  }

  template <typename Scalar>
  Tensor<Scalar> forward(const Vec<Scalar>& p, const Tensor<Scalar>& x) const {
    Tensor<Scalar> y(x.channels, x.height, x.width);
    const int cg = channels / groups;
    const auto g = view(p, gamma);
    const auto b = view(p, beta);
    for (int gi = 0; gi < groups; ++gi) {
      const auto blk = x.data.middleRows(gi * cg, cg);
      const double n = static_cast<double>(blk.size());
      const double mean = static_cast<double>(blk.template cast<double>().sum()) / n;
      const double var = (blk.template cast<double>().array() - mean).square().sum() / n;
      const Scalar inv = Scalar(1.0 / std::sqrt(var + kEps));
      for (int c = gi * cg; c < (gi + 1) * cg; ++c)
        y.data.row(c) = ((x.data.row(c).array() - Scalar(mean)) * (inv * g(c, 0)) + b(c, 0)).matrix();
    }
    return y;
  }

  template <typename Scalar>
  Tensor<Scalar> backward(const Vec<Scalar>& p, Vec<Scalar>& grad, const Tensor<Scalar>& x,
                          const Tensor<Scalar>& dy) const {
    Tensor<Scalar> dx(x.channels, x.height, x.width);
    const int cg = channels / groups;
    const auto g = view(p, gamma);
    auto dg = view(grad, gamma);
    auto db = view(grad, beta);
    const int hw = x.pixels();
    for (int gi = 0; gi < groups; ++gi) {
      const auto blk = x.data.middleRows(gi * cg, cg);
      const double n = static_cast<double>(blk.size());
      const double mean = static_cast<double>(blk.template cast<double>().sum()) / n;
      const double var = (blk.template cast<double>().array() - mean).square().sum() / n;
      const double inv = 1.0 / std::sqrt(var + kEps);
      Mat<Scalar> xhat = ((blk.array() - Scalar(mean)) * Scalar(inv)).matrix();
      Mat<Scalar> dxhat(cg, hw);
      for (int k = 0; k < cg; ++k) {
        const int c = gi * cg + k;
        db(c, 0) += dy.data.row(c).sum();
        dg(c, 0) += dy.data.row(c).cwiseProduct(xhat.row(k)).sum();
        dxhat.row(k) = dy.data.row(c) * g(c, 0);
      }
      const double m1 = static_cast<double>(dxhat.template cast<double>().sum()) / n;
      const double m2 = static_cast<double>(dxhat.template cast<double>().cwiseProduct(xhat.template cast<double>()).sum()) / n;
      dx.data.middleRows(gi * cg, cg) =
          (Scalar(inv) * (dxhat.array() - Scalar(m1) - xhat.array() * Scalar(m2))).matrix();
    }
    return dx;
  }
};

// -------------------------------------------------------------------- linear

struct Linear {
  int in_features = 0;
  int out_features = 0;
  ParamSlot weight;  // out x in
  ParamSlot bias;    // out x 1

  Linear() = default;
  Linear(ParamLayout& layout, const std::string& name, int in, int out) : in_features(in), out_features(out) {
    weight = layout.add(name + ".weight", out, in, Init::kFanIn, in);
    bias = layout.add(name + ".bias", out, 1, Init::kZero);
  }

  template <typename Scalar>
  Vec<Scalar> forward(const Vec<Scalar>& p, const Vec<Scalar>& x) const {
    return view(p, weight) * x + view(p, bias).col(0);
  }

  template <typename Scalar>
  Vec<Scalar> backward(const Vec<Scalar>& p, Vec<Scalar>& grad, const Vec<Scalar>& x, const Vec<Scalar>& dy) const {
    view(grad, weight).noalias() += dy * x.transpose();
    view(grad, bias).col(0) += dy;
    return view(p, weight).transpose() * dy;
  }
};

// ------------------------------------------------------------------ resample

template <typename Scalar>
Tensor<Scalar> upsample_nearest2(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c)
    for (int i = 0; i < y.height; ++i)
      for (int j = 0; j < y.width; ++j) y.at(c, i, j) = x.at(c, i / 2, j / 2);
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest2_backward(const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(dy.channels, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c)
    for (int i = 0; i < dy.height; ++i)
      for (int j = 0; j < dy.width; ++j) dx.at(c, i / 2, j / 2) += dy.at(c, i, j);
  return dx;
}

// ----------------------------------------------------------------- attention

/// Single-head spatial self-attention with a residual connection.
struct SelfAttention {
  int channels = 0;
  GroupNorm norm;
  Conv2d qkv;
  Conv2d proj;

  SelfAttention() = default;
  SelfAttention(ParamLayout& layout, const std::string& name, int c, int groups) : channels(c) {
    norm = GroupNorm(layout, name + ".norm", c, groups);
    qkv = Conv2d(layout, name + ".qkv", c, 3 * c, 1, 1, Padding::kZero);
    proj = Conv2d(layout, name + ".proj", c, c, 1, 1, Padding::kZero);
  }

  template <typename Scalar>
  struct Cache {
    Tensor<Scalar> x, h, qkv, out;
    Mat<Scalar> attn;  // N x N, rows sum to one
  };

  template <typename Scalar>
  Tensor<Scalar> forward(const Vec<Scalar>& p, const Tensor<Scalar>& x, Cache<Scalar>* cache) const {
    const int c = channels;
    Tensor<Scalar> h = norm.forward(p, x);
    Tensor<Scalar> qkv_t = qkv.forward(p, h);
    const auto q = qkv_t.data.topRows(c);
    const auto k = qkv_t.data.middleRows(c, c);
    const auto v = qkv_t.data.bottomRows(c);
    Mat<Scalar> a = (q.transpose() * k) * Scalar(1.0 / std::sqrt(double(c)));
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const Scalar m = a.row(i).maxCoeff();
      a.row(i) = (a.row(i).array() - m).exp().matrix();
      a.row(i) /= a.row(i).sum();
    }
    Tensor<Scalar> o(c, x.height, x.width);
    o.data.noalias() = v * a.transpose();
    Tensor<Scalar> y = proj.forward(p, o);
    y.data += x.data;
    if (cache) *cache = Cache<Scalar>{x, std::move(h), std::move(qkv_t), std::move(o), std::move(a)};
    return y;
  }

  template <typename Scalar>
  Tensor<Scalar> backward(const Vec<Scalar>& p, Vec<Scalar>& grad, const Cache<Scalar>& cache,
                          const Tensor<Scalar>& dy) const {
    const int c = channels;
    Tensor<Scalar> d_o = proj.backward(p, grad, cache.out, dy);
    const auto q = cache.qkv.data.topRows(c);
    const auto k = cache.qkv.data.middleRows(c, c);
    const auto v = cache.qkv.data.bottomRows(c);
    const Mat<Scalar>& a = cache.attn;
    Tensor<Scalar> dqkv(3 * c, cache.x.height, cache.x.width);
    dqkv.data.bottomRows(c).noalias() = d_o.data * a;
    Mat<Scalar> da = d_o.data.transpose() * v;
    const Vec<Scalar> rs = (da.cwiseProduct(a)).rowwise().sum();
    Mat<Scalar> ds = (a.array() * (da.colwise() - rs).array()).matrix() * Scalar(1.0 / std::sqrt(double(c)));
    dqkv.data.topRows(c).noalias() = k * ds.transpose();
    dqkv.data.middleRows(c, c).noalias() = q * ds;
    Tensor<Scalar> dh = qkv.backward(p, grad, cache.h, dqkv);
    Tensor<Scalar> dx = norm.backward(p, grad, cache.x, dh);
    dx.data += dy.data;
    return dx;
  }
};

}  // namespace wdm::nn

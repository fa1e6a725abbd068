#pragma once

// Conditional U-Net denoiser with EDM preconditioning.
//
//   stem conv (2C -> w0)
//   encoder: per stage s, `blocks` residual blocks at width w_s, then a
//            stride-2 conv (except the last stage); the stage output is kept
//            as the skip
//   bottleneck: self-attention at the coarsest resolution
//   decoder: per stage s (coarse to fine), concat skip_s, `blocks` residual
//            blocks, then nearest x2 + conv to w_{s-1} (except stage 0)
//   head: GroupNorm -> SiLU -> conv (w0 -> C), zero-initialised
//
// The noise level enters through Fourier features of c_noise, a two-layer
// MLP, and a per-block affine (scale, shift) on the second normalisation.

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "wdm/nn/layers.hpp"
#include "wdm/schedule.hpp"

namespace wdm {

struct Architecture {
  int data_channels = 1;  // C: 1 (pixel), 4 (haar-1), 16 (haar-2)
  std::vector<int> widths{32, 64, 128};
  int blocks_per_stage = 2;
  bool attention = true;
  int embed_dim = 64;
  int groups = 8;
  nn::Padding padding = nn::Padding::kZero;

  int input_channels() const { return 2 * data_channels; }
  int hidden_embed() const { return 4 * widths.front(); }
  int stages() const { return static_cast<int>(widths.size()); }
  int spatial_divisor() const { return 1 << (stages() - 1); }
};

/// Sinusoidal features of c_noise over a fixed log-spaced frequency bank
/// 1 .. 100: [sin(f_k c) for k], [cos(f_k c) for k].
template <typename Scalar>
Vec<Scalar> embed_noise_level(double c_noise, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ArgumentError("embed_noise_level: dim must be even and positive");
  const int half = dim / 2;
  Vec<Scalar> e(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = half > 1 ? std::exp(std::log(100.0) * k / (half - 1)) : 1.0;
    e[k] = static_cast<Scalar>(std::sin(freq * c_noise));
    e[half + k] = static_cast<Scalar>(std::cos(freq * c_noise));
  }
  return e;
}

namespace nn {

struct ResBlock {
  int in_channels = 0;
  int out_channels = 0;
  GroupNorm norm1, norm2;
  Conv2d conv1, conv2;
  Linear modulation;  // embedding -> (scale, shift)
  bool has_skip_proj = false;
  Conv2d skip_proj;

  ResBlock() = default;
  ResBlock(ParamLayout& layout, const std::string& name, int cin, int cout, int emb, int groups, Padding pad)
      : in_channels(cin), out_channels(cout) {
    norm1 = GroupNorm(layout, name + ".norm1", cin, groups);
    conv1 = Conv2d(layout, name + ".conv1", cin, cout, 3, 1, pad);
    modulation = Linear(layout, name + ".modulation", emb, 2 * cout);
    norm2 = GroupNorm(layout, name + ".norm2", cout, groups);
    conv2 = Conv2d(layout, name + ".conv2", cout, cout, 3, 1, pad);
    has_skip_proj = cin != cout;
    if (has_skip_proj) skip_proj = Conv2d(layout, name + ".skip", cin, cout, 1, 1, pad);
  }

  template <typename Scalar>
  struct Cache {
    Tensor<Scalar> x, a1, h1, a2, f;
    Vec<Scalar> mod;
  };

  template <typename Scalar>
  Tensor<Scalar> forward(const Vec<Scalar>& p, const Tensor<Scalar>& x, const Vec<Scalar>& emb,
                         Cache<Scalar>* cache) const {
    Tensor<Scalar> a1 = norm1.forward(p, x);
    Tensor<Scalar> h1 = conv1.forward(p, silu(a1));
    Vec<Scalar> mod = modulation.forward(p, emb);
    Tensor<Scalar> a2 = norm2.forward(p, h1);
    Tensor<Scalar> f = a2;
    for (int c = 0; c < out_channels; ++c)
      f.data.row(c) = a2.data.row(c) * (Scalar(1) + mod[c]) + Mat<Scalar>::Constant(1, a2.pixels(), mod[out_channels + c]);
    Tensor<Scalar> y = conv2.forward(p, silu(f));
    if (has_skip_proj)
      y.data += skip_proj.forward(p, x).data;
    else
      y.data += x.data;
    if (cache) *cache = Cache<Scalar>{x, std::move(a1), std::move(h1), std::move(a2), std::move(f), std::move(mod)};
    return y;
  }

  /// Returns dL/dx; adds dL/demb into `demb`.
  template <typename Scalar>
  Tensor<Scalar> backward(const Vec<Scalar>& p, Vec<Scalar>& grad, const Cache<Scalar>& c, const Vec<Scalar>& emb,
                          const Tensor<Scalar>& dy, Vec<Scalar>& demb) const {
    Tensor<Scalar> dx = has_skip_proj ? skip_proj.backward(p, grad, c.x, dy) : dy;
    Tensor<Scalar> ds2 = conv2.backward(p, grad, silu(c.f), dy);
    Tensor<Scalar> df = silu_backward(c.f, ds2);
    Vec<Scalar> dmod(2 * out_channels);
    Tensor<Scalar> da2 = df;
    for (int ch = 0; ch < out_channels; ++ch) {
      dmod[ch] = df.data.row(ch).cwiseProduct(c.a2.data.row(ch)).sum();
      dmod[out_channels + ch] = df.data.row(ch).sum();
      da2.data.row(ch) *= (Scalar(1) + c.mod[ch]);
    }
    demb += modulation.backward(p, grad, emb, dmod);
    Tensor<Scalar> dh1 = norm2.backward(p, grad, c.h1, da2);
    Tensor<Scalar> ds1 = conv1.backward(p, grad, silu(c.a1), dh1);
    Tensor<Scalar> da1 = silu_backward(c.a1, ds1);
    dx.data += norm1.backward(p, grad, c.x, da1).data;
    return dx;
  }
};

}  // namespace nn

/// The denoiser network F; `denoise` wraps it with the preconditioning.
class UNet {
 public:
  explicit UNet(Architecture arch) : arch_(std::move(arch)) { build(); }

  const Architecture& architecture() const { return arch_; }
  const nn::ParamLayout& layout() const { return layout_; }
  Eigen::Index parameter_count() const { return layout_.total(); }

  template <typename Scalar>
  Vec<Scalar> init_params(std::uint64_t seed, bool zero_output = true) const {
    Rng rng(seed);
    return layout_.initialize<Scalar>(rng, zero_output);
  }

  template <typename Scalar>
  struct Cache {
    Vec<Scalar> emb0, pre1, pre2, emb;
    Tensor<Scalar> input;
    std::vector<typename nn::ResBlock::Cache<Scalar>> enc, dec;
    std::vector<Tensor<Scalar>> down_in, up_in, skips;
    typename nn::SelfAttention::Cache<Scalar> attn;
    Tensor<Scalar> head_in, head_a;
  };

  void check_input(int channels, int h, int w) const {
    if (channels != arch_.input_channels())
      throw DimensionError("unet: expected " + std::to_string(arch_.input_channels()) + " input channels, got " +
                           std::to_string(channels));
    if (h % arch_.spatial_divisor() != 0 || w % arch_.spatial_divisor() != 0)
      throw DimensionError("unet: spatial dims not divisible by 2^(stages-1)");
  }

  template <typename Scalar>
  Tensor<Scalar> forward(const Vec<Scalar>& p, const Tensor<Scalar>& input, double c_noise,
                         Cache<Scalar>* cache = nullptr) const {
    check_input(input.channels, input.height, input.width);
    const int S = arch_.stages(), B = arch_.blocks_per_stage;
    Cache<Scalar> local;
    Cache<Scalar>& cc = cache ? *cache : local;
    const bool keep = cache != nullptr;

    cc.emb0 = embed_noise_level<Scalar>(c_noise, arch_.embed_dim);
    cc.pre1 = embed1_.forward(p, cc.emb0);
    cc.pre2 = embed2_.forward(p, nn::silu(cc.pre1));
    cc.emb = nn::silu(cc.pre2);
    if (keep) cc.input = input;

    Tensor<Scalar> h = stem_.forward(p, input);
    cc.enc.assign(enc_.size(), {});
    cc.dec.assign(dec_.size(), {});
    cc.down_in.assign(down_.size(), {});
    cc.up_in.assign(up_.size(), {});
    cc.skips.assign(S, {});
    for (int s = 0; s < S; ++s) {
      for (int b = 0; b < B; ++b) {
        const int i = s * B + b;
        h = enc_[i].forward(p, h, cc.emb, keep ? &cc.enc[i] : nullptr);
      }
      cc.skips[s] = h;
      if (s + 1 < S) {
        if (keep) cc.down_in[s] = h;
        h = down_[s].forward(p, h);
      }
    }
    if (arch_.attention) h = attn_.forward(p, h, keep ? &cc.attn : nullptr);
    for (int s = S - 1; s >= 0; --s) {
      h = concat_channels(h, cc.skips[s]);
      for (int b = 0; b < B; ++b) {
        const int i = s * B + b;
        h = dec_[i].forward(p, h, cc.emb, keep ? &cc.dec[i] : nullptr);
      }
      if (s > 0) {
        if (keep) cc.up_in[s] = h;
        h = up_[s].forward(p, nn::upsample_nearest2(h));
      }
    }
    if (keep) cc.head_in = h;
    Tensor<Scalar> a = head_norm_.forward(p, h);
    Tensor<Scalar> out = head_.forward(p, nn::silu(a));
    if (keep) cc.head_a = std::move(a);
    if (!keep) cc = Cache<Scalar>{};
    return out;
  }

  /// Accumulates dL/dparams into `grad`; returns dL/dinput.
  template <typename Scalar>
  Tensor<Scalar> backward(const Vec<Scalar>& p, Vec<Scalar>& grad, const Cache<Scalar>& cc,
                          const Tensor<Scalar>& dout) const {
    const int S = arch_.stages(), B = arch_.blocks_per_stage;
    Vec<Scalar> demb = Vec<Scalar>::Zero(cc.emb.size());
    Tensor<Scalar> dh = nn::silu_backward(cc.head_a, head_.backward(p, grad, nn::silu(cc.head_a), dout));
    dh = head_norm_.backward(p, grad, cc.head_in, dh);

    // Decoder, fine to coarse.
    std::vector<Tensor<Scalar>> dskips(S);
    for (int s = 0; s < S; ++s) {
      if (s > 0) {
        Tensor<Scalar> dup = up_[s].backward(p, grad, nn::upsample_nearest2(cc.up_in[s]), dh);
        dh = nn::upsample_nearest2_backward(dup);
      }
      for (int b = B - 1; b >= 0; --b) {
        const int i = s * B + b;
        dh = dec_[i].backward(p, grad, cc.dec[i], cc.emb, dh, demb);
      }
      const int skip_c = cc.skips[s].channels;
      const int h_c = dh.channels - skip_c;
      dskips[s] = Tensor<Scalar>(skip_c, dh.height, dh.width);
      dskips[s].data = dh.data.bottomRows(skip_c);
      Tensor<Scalar> top(h_c, dh.height, dh.width);
      top.data = dh.data.topRows(h_c);
      dh = std::move(top);
    }

    if (arch_.attention) dh = attn_.backward(p, grad, cc.attn, dh);

    // Encoder, coarse to fine.
    for (int s = S - 1; s >= 0; --s) {
      if (s + 1 < S) dh = down_[s].backward(p, grad, cc.down_in[s], dh);
      dh.data += dskips[s].data;
      for (int b = B - 1; b >= 0; --b) {
        const int i = s * B + b;
        dh = enc_[i].backward(p, grad, cc.enc[i], cc.emb, dh, demb);
      }
    }
    Tensor<Scalar> din = stem_.backward(p, grad, cc.input, dh);

    const Vec<Scalar> dpre2 = nn::silu_backward(cc.pre2, demb);
    const Vec<Scalar> ds1 = embed2_.backward(p, grad, nn::silu(cc.pre1), dpre2);
    embed1_.backward(p, grad, cc.emb0, nn::silu_backward(cc.pre1, ds1));
    return din;
  }

 private:
  void build();

  Architecture arch_;
  nn::ParamLayout layout_;
  nn::Linear embed1_, embed2_;
  nn::Conv2d stem_;
  std::vector<nn::ResBlock> enc_, dec_;
  std::vector<nn::Conv2d> down_, up_;
  nn::SelfAttention attn_;
  nn::GroupNorm head_norm_;
  nn::Conv2d head_;
};

inline void UNet::build() {
  const Architecture& a = arch_;
  if (a.widths.empty()) throw ArgumentError("architecture: no stages");
  if (a.data_channels < 1) throw ArgumentError("architecture: data_channels must be positive");
  if (a.blocks_per_stage < 1) throw ArgumentError("architecture: blocks_per_stage must be positive");
  const int S = a.stages(), B = a.blocks_per_stage, emb = a.hidden_embed();
  const nn::Padding pad = a.padding;

  embed1_ = nn::Linear(layout_, "embed.fc1", a.embed_dim, emb);
  embed2_ = nn::Linear(layout_, "embed.fc2", emb, emb);
  stem_ = nn::Conv2d(layout_, "stem", a.input_channels(), a.widths[0], 3, 1, pad);

  int ch = a.widths[0];
  for (int s = 0; s < S; ++s) {
    for (int b = 0; b < B; ++b) {
      enc_.emplace_back(layout_, "enc" + std::to_string(s) + "." + std::to_string(b), ch, a.widths[s], emb, a.groups,
                        pad);
      ch = a.widths[s];
    }
    if (s + 1 < S) down_.emplace_back(layout_, "down" + std::to_string(s), ch, ch, 3, 2, pad);
  }
  if (a.attention) attn_ = nn::SelfAttention(layout_, "mid.attn", ch, a.groups);

  dec_.resize(static_cast<std::size_t>(S) * B);
  up_.resize(S);
  for (int s = S - 1; s >= 0; --s) {
    ch += a.widths[s];
    for (int b = 0; b < B; ++b) {
      dec_[s * B + b] = nn::ResBlock(layout_, "dec" + std::to_string(s) + "." + std::to_string(b), ch, a.widths[s],
                                     emb, a.groups, pad);
      ch = a.widths[s];
    }
    if (s > 0) {
      up_[s] = nn::Conv2d(layout_, "up" + std::to_string(s), ch, a.widths[s - 1], 3, 1, pad);
      ch = a.widths[s - 1];
    }
  }
  head_norm_ = nn::GroupNorm(layout_, "head.norm", ch, a.groups);
  head_ = nn::Conv2d(layout_, "head.conv", ch, a.data_channels, 3, 1, pad, /*zero_init=*/true);
}

/// Total element count over every registered weight tensor.
inline Eigen::Index count_params(const nn::ParamLayout& layout) {
  Eigen::Index n = 0;
  for (const auto& e : layout.entries()) n += static_cast<Eigen::Index>(e.slot.rows) * e.slot.cols;
  return n;
}

/// Preconditioned denoiser
///   D(x; sigma) = c_skip x + c_out F(c_in x (+) condition, c_noise)
/// where x is the EDM-variable noisy state and (+) is channel concatenation.
template <typename Scalar>
Tensor<Scalar> denoise(const UNet& net, const Vec<Scalar>& params, const NoiseSchedule& sched,
                       const Tensor<Scalar>& noisy, const Tensor<Scalar>& condition, double sigma,
                       typename UNet::Cache<Scalar>* cache = nullptr) {
  require_same_shape(noisy, condition, "denoise");
  if (noisy.channels != net.architecture().data_channels)
    throw DimensionError("denoise: data channels do not match the architecture");
  const EdmCoeffs k = sched.edm_coeffs(sigma);
  Tensor<Scalar> scaled = noisy;
  scaled.data *= Scalar(k.c_in);
  const Tensor<Scalar> f = net.forward(params, concat_channels(scaled, condition), k.c_noise, cache);
  Tensor<Scalar> out = noisy;
  out.data = Scalar(k.c_skip) * noisy.data + Scalar(k.c_out) * f.data;
  return out;
}

}  // namespace wdm

#pragma once

// Training objective: preconditioned conditional denoising loss plus an
// anisotropic total-variation penalty on the detail channels of the
// one-step Tweedie estimate of the clean coefficients.

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "wdm/denoiser.hpp"
#include "wdm/diffusion.hpp"
#include "wdm/grid.hpp"
#include "wdm/wavelet.hpp"

namespace wdm {

struct TrainConfig {
  double tv_weight = 1e-5;
  double learning_rate = 1e-4;
  double ema_decay = 0.999;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (tv_weight < 0.0) throw ArgumentError("train config: tv_weight must be >= 0");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ArgumentError("train config: ema_decay must be in (0, 1)");
    if (!(learning_rate > 0.0)) throw ArgumentError("train config: learning_rate must be > 0");
    if (batch_size < 1) throw ArgumentError("train config: batch_size must be >= 1");
  }
};

struct LossBreakdown {
  double total = 0.0;
  double cond = 0.0;
  double tv = 0.0;
  double sigma = 0.0;
};

/// One training pair in model coordinates: transformed, normalised HR
/// target and the transformed, normalised bicubic-upsampled condition.
template <typename Scalar>
struct TrainingExample {
  Tensor<Scalar> target;
  Tensor<Scalar> condition;
};

template <typename Scalar>
TrainingExample<Scalar> make_example(const Field<Scalar>& hr, const Field<Scalar>& lr, int factor,
                                     const NormStats& stats, const DomainTransform& transform) {
  if (lr.height() * factor != hr.height() || lr.width() * factor != hr.width())
    throw DimensionError("make_example: hr dims are not lr dims times factor");
  return {transform.forward(normalize(hr, stats)).bands,
          transform.forward(normalize(bicubic_upsample(lr, factor), stats)).bands};
}

// ----------------------------------------------------------------------- TV

/// Mean absolute forward difference along x plus along y, summed over the
/// listed channels.
template <typename Scalar>
double anisotropic_tv(const Tensor<Scalar>& t, std::span<const int> channels) {
  double total = 0.0;
  const int h = t.height, w = t.width;
  for (int c : channels) {
    double sx = 0.0, sy = 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j + 1 < w; ++j) sx += std::abs(double(t.at(c, i, j + 1)) - double(t.at(c, i, j)));
    for (int i = 0; i + 1 < h; ++i)
      for (int j = 0; j < w; ++j) sy += std::abs(double(t.at(c, i + 1, j)) - double(t.at(c, i, j)));
    if (w > 1) total += sx / (double(h) * (w - 1));
    if (h > 1) total += sy / (double(h - 1) * w);
  }
  return total;
}

/// Subgradient of anisotropic_tv, scaled by `scale` and added into `g`.
template <typename Scalar>
void anisotropic_tv_grad(const Tensor<Scalar>& t, std::span<const int> channels, double scale, Tensor<Scalar>& g) {
  const int h = t.height, w = t.width;
  auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  for (int c : channels) {
    if (w > 1) {
      const double k = scale / (double(h) * (w - 1));
      for (int i = 0; i < h; ++i)
        for (int j = 0; j + 1 < w; ++j) {
          const double s = k * sgn(double(t.at(c, i, j + 1)) - double(t.at(c, i, j)));
          g.at(c, i, j + 1) += Scalar(s);
          g.at(c, i, j) -= Scalar(s);
        }
    }
    if (h > 1) {
      const double k = scale / (double(h - 1) * w);
      for (int i = 0; i + 1 < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double s = k * sgn(double(t.at(c, i + 1, j)) - double(t.at(c, i, j)));
          g.at(c, i + 1, j) += Scalar(s);
          g.at(c, i, j) -= Scalar(s);
        }
    }
  }
}

/// TV(V) + TV(H) + TV(D) generalised to every non-approximation channel.
template <typename Scalar>
double tv_regularizer(const CoeffTensor<Scalar>& coeffs) {
  if (coeffs.level < 1) throw ArgumentError("tv_regularizer: needs wavelet coefficients (level >= 1)");
  const auto details = DomainTransform::haar(coeffs.level).detail_channels();
  return anisotropic_tv(coeffs.bands, std::span<const int>(details));
}

// --------------------------------------------------------------------- loss

/// Noisy EDM-variable input x_sigma = c0 + sigma n.
template <typename Scalar>
Tensor<Scalar> noisy_input(const Tensor<Scalar>& clean, const Tensor<Scalar>& noise, double sigma) {
  require_same_shape(clean, noise, "noisy_input");
  Tensor<Scalar> x = clean;
  x.data += Scalar(sigma) * noise.data;
  return x;
}

/// weight(sigma) * mean ||D - c0||^2 for any denoiser output D.
template <typename Scalar>
double weighted_denoising_error(const NoiseSchedule& sched, const Tensor<Scalar>& denoised, const Tensor<Scalar>& clean,
                                double sigma) {
  require_same_shape(denoised, clean, "cond_loss");
  const double mse = (denoised.data.template cast<double>() - clean.data.template cast<double>()).squaredNorm() /
                     static_cast<double>(clean.size());
  return sched.edm_coeffs(sigma).weight * mse;
}

/// Batch-mean conditional loss for any denoiser callable
/// (x_sigma, condition, sigma) -> D.
template <typename Scalar, typename Denoiser>
double cond_loss(const NoiseSchedule& sched, std::span<const TrainingExample<Scalar>> batch, double sigma,
                 std::span<const Tensor<Scalar>> noises, Denoiser&& denoiser) {
  if (batch.empty()) throw ArgumentError("cond_loss: empty batch");
  if (noises.size() != batch.size()) throw ArgumentError("cond_loss: one noise tensor per example required");
  if (!(sigma > 0.0)) throw ArgumentError("cond_loss: sigma must be positive");
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor<Scalar> x_sigma = noisy_input(batch[b].target, noises[b], sigma);
    total += weighted_denoising_error(sched, denoiser(x_sigma, batch[b].condition, sigma), batch[b].target, sigma);
  }
  return total / static_cast<double>(batch.size());
}

/// Loss and (optionally) its gradient for one batch at a shared noise level.
/// The TV term is evaluated on the Tweedie estimate computed from the
/// denoiser's score; `details` lists the channels it applies to (empty
/// disables it, as for the pixel-space model).
template <typename Scalar>
LossBreakdown wdm_loss(const UNet& net, const Vec<Scalar>& params, const NoiseSchedule& sched,
                       std::span<const TrainingExample<Scalar>> batch, double sigma,
                       std::span<const Tensor<Scalar>> noises, double tv_weight, std::span<const int> details,
                       Vec<Scalar>* grad = nullptr) {
  if (batch.empty()) throw ArgumentError("wdm_loss: empty batch");
  if (noises.size() != batch.size()) throw ArgumentError("wdm_loss: one noise tensor per example required");
  if (!(sigma > 0.0)) throw ArgumentError("wdm_loss: sigma must be positive");
  const EdmCoeffs k = sched.edm_coeffs(sigma);
  // VP view of the same noise level: alpha_bar = s^2 = 1 / (1 + sigma^2).
  const double scale = 1.0 / std::sqrt(1.0 + sigma * sigma);
  const double alpha_bar = scale * scale;
  // d(c0_hat)/dD for the Tweedie estimate built from the VP score; equals 1.
  const double tweedie_jac = (1.0 - alpha_bar) / (sigma * sigma * scale * std::sqrt(alpha_bar));
  const double nb = static_cast<double>(batch.size());

  LossBreakdown out;
  out.sigma = sigma;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& ex = batch[b];
    const Tensor<Scalar> x_sigma = noisy_input(ex.target, noises[b], sigma);
    typename UNet::Cache<Scalar> cache;
    const Tensor<Scalar> d = denoise(net, params, sched, x_sigma, ex.condition, sigma, grad ? &cache : nullptr);
    out.cond += weighted_denoising_error(sched, d, ex.target, sigma) / nb;

    Tensor<Scalar> c0_hat;
    if (!details.empty()) {
      Tensor<Scalar> xt = x_sigma;
      xt.data *= Scalar(scale);
      const Mat<Scalar> score = denoiser_to_score(d.data, x_sigma.data, sigma) / Scalar(scale);
      c0_hat = d;
      c0_hat.data = tweedie_from_alpha_bar(xt.data, score, alpha_bar);
      out.tv += anisotropic_tv(c0_hat, details) / nb;
    }

    if (grad) {
      Tensor<Scalar> dd = d;
      dd.data = (d.data - ex.target.data) * Scalar(2.0 * k.weight / (static_cast<double>(d.size()) * nb));
      if (!details.empty() && tv_weight > 0.0) anisotropic_tv_grad(c0_hat, details, tv_weight * tweedie_jac / nb, dd);
      dd.data *= Scalar(k.c_out);
      net.backward(params, *grad, cache, dd);
    }
  }
  out.total = out.cond + tv_weight * out.tv;
  return out;
}

// ---------------------------------------------------------------- optimiser

template <typename Scalar>
struct TrainState {
  Vec<Scalar> params;
  Vec<Scalar> ema;
  Vec<Scalar> adam_m;
  Vec<Scalar> adam_v;
  long step = 0;

  static TrainState fresh(Vec<Scalar> p) {
    TrainState s;
    s.ema = p;
    s.adam_m = Vec<Scalar>::Zero(p.size());
    s.adam_v = Vec<Scalar>::Zero(p.size());
    s.params = std::move(p);
    return s;
  }
};

/// Bias-corrected Adam step (optionally with decoupled weight decay).
/// Returns the applied update delta, params' = params - delta.
template <typename Scalar>
Vec<Scalar> adam_update(TrainState<Scalar>& st, const Vec<Scalar>& grad, const TrainConfig& cfg) {
  const double t = static_cast<double>(st.step + 1);
  const Scalar b1 = Scalar(cfg.adam_beta1), b2 = Scalar(cfg.adam_beta2);
  st.adam_m = b1 * st.adam_m + (Scalar(1) - b1) * grad;
  st.adam_v = b2 * st.adam_v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  Vec<Scalar> delta = (Scalar(cfg.learning_rate / c1) * st.adam_m.array() /
                       ((st.adam_v.array() / Scalar(c2)).sqrt() + Scalar(cfg.adam_eps)))
                          .matrix();
  if (cfg.weight_decay > 0.0) delta += Scalar(cfg.learning_rate * cfg.weight_decay) * st.params;
  st.params -= delta;
  return delta;
}

template <typename Scalar>
void ema_update(TrainState<Scalar>& st, double decay) {
  st.ema = Scalar(decay) * st.ema + Scalar(1.0 - decay) * st.params;
}

/// Noise level for a step: t ~ U[0, T] mapped through sigma(t), floored.
inline double sample_training_sigma(const NoiseSchedule& sched, std::uint64_t seed, long step) {
  Rng rng(seed, static_cast<std::uint64_t>(step) * 2 + 0);
  const double t = rng.uniform(0.0, sched.total_time);
  return std::max(sched.sigma(t), NoiseSchedule::kSigmaFloor);
}

template <typename Scalar>
std::vector<Tensor<Scalar>> sample_training_noise(std::span<const TrainingExample<Scalar>> batch, std::uint64_t seed,
                                                  long step) {
  std::vector<Tensor<Scalar>> noises;
  noises.reserve(batch.size());
  const std::uint64_t base = stream_seed(seed, static_cast<std::uint64_t>(step) * 2 + 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng rng(base, b);
    const auto& t = batch[b].target;
    noises.push_back(rng.normal_tensor<Scalar>(t.channels, t.height, t.width));
  }
  return noises;
}

/// Draw sigma and noise, take the loss gradient, apply Adam, update the EMA.
/// Deterministic in (state, batch, config.seed).
template <typename Scalar>
LossBreakdown train_step(const UNet& net, const NoiseSchedule& sched, const TrainConfig& cfg,
                         const DomainTransform& transform, TrainState<Scalar>& st,
                         std::span<const TrainingExample<Scalar>> batch) {
  const double sigma = sample_training_sigma(sched, cfg.seed, st.step);
  const auto noises = sample_training_noise(batch, cfg.seed, st.step);
  const auto details = transform.detail_channels();
  Vec<Scalar> grad = Vec<Scalar>::Zero(st.params.size());
  const LossBreakdown loss = wdm_loss(net, st.params, sched, batch, sigma, std::span<const Tensor<Scalar>>(noises),
                                      cfg.tv_weight, std::span<const int>(details), &grad);
  if (!std::isfinite(loss.total) || !grad.allFinite()) {
    std::ostringstream msg;
    msg << "training diverged: total=" << loss.total << " cond=" << loss.cond << " tv=" << loss.tv
        << " sigma=" << loss.sigma;
    throw NumericalDivergence(msg.str(), st.step);
  }
  adam_update(st, grad, cfg);
  ema_update(st, cfg.ema_decay);
  ++st.step;
  return loss;
}

}  // namespace wdm

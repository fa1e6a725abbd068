#pragma once

#include <cstdint>

#include "wdm/denoiser.hpp"
#include "wdm/diffusion.hpp"
#include "wdm/grid.hpp"
#include "wdm/wavelet.hpp"

namespace wdm {

/// Everything needed to turn an LR field into an HR sample.
struct DiffusionModel {
  UNet net;
  Vec<float> weights;  // EMA weights at inference time
  NoiseSchedule schedule;
  DomainTransform transform;
  NormStats norm;
  int factor = 8;
};

/// VP score of the network at time t for sampler state x_t (C x HW).
inline Mat<float> network_score(const DiffusionModel& m, const Mat<float>& xt, const Tensor<float>& condition,
                                double t) {
  const SigmaScale ss = m.schedule.sigma_and_scale(t);
  Tensor<float> x_sigma(condition.channels, condition.height, condition.width);
  x_sigma.data = xt / float(ss.scale);
  const Tensor<float> d = denoise(m.net, m.weights, m.schedule, x_sigma, condition, ss.sigma);
  return denoiser_to_score(d.data, x_sigma.data, ss.sigma) / float(ss.scale);
}

/// Transformed, normalised conditioning tensor for an LR field.
inline CoeffTensor<float> prepare_condition(const DiffusionModel& m, const GridField& lr) {
  const int h = lr.height() * m.factor, w = lr.width() * m.factor;
  try {
    m.transform.check_dims(h, w);
    m.net.check_input(m.transform.channels() * 2, h / m.transform.divisor(), w / m.transform.divisor());
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("downscale: ") + e.what());
  }
  if (m.net.architecture().data_channels != m.transform.channels())
    throw ConfigError("downscale: model channels do not match transform " + m.transform.name());
  return m.transform.forward(normalize(bicubic_upsample(lr, m.factor), m.norm));
}

/// bicubic upsample -> transform -> reverse SDE -> inverse -> denormalise -> clip.
inline GridField downscale(const GridField& lr, const DiffusionModel& m, int steps, std::uint64_t seed) {
  const CoeffTensor<float> cond = prepare_condition(m, lr);
  const Tensor<float>& c = cond.bands;
  auto score = [&m](const Mat<float>& x, const Tensor<float>& cnd, double t) { return network_score(m, x, cnd, t); };
  CoeffTensor<float> out = cond;
  out.bands.data = reverse_sample<float>(m.schedule, score, c, c.channels, c.pixels(), SamplerSettings{steps, seed});
  GridField hr = denormalize(m.transform.inverse(out), m.norm);
  return clip(hr, 0.0f, hr.value_max);
}

}  // namespace wdm

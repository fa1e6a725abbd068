#include "wdm/synth.hpp"

#include <cmath>
#include <numbers>

#include "wdm/rng.hpp"

namespace wdm {
namespace {

// Separable box blur with replicate borders, applied `passes` times.
Plane<double> smooth(Plane<double> p, int radius, int passes) {
  if (radius < 1) return p;
  const int h = static_cast<int>(p.rows()), w = static_cast<int>(p.cols());
  const double norm = 1.0 / (2 * radius + 1);
  Plane<double> tmp(h, w);
  for (int k = 0; k < passes; ++k) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) s += p(i, std::clamp(j + d, 0, w - 1));
        tmp(i, j) = s * norm;
      }
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) s += tmp(std::clamp(i + d, 0, h - 1), j);
        p(i, j) = s * norm;
      }
  }
  return p;
}

}  // namespace

GridField synth_storm_field(std::uint64_t seed, int height, int width, const StormParams& params) {
  if (height < 16 || width < 16) throw DimensionError("synth_storm_field: dims must be >= 16");
  Rng rng(seed);
  const double side = std::min(height, width);
  Plane<double> field = Plane<double>::Zero(height, width);

  if (params.background > 0.0) {
    field += params.base_level * params.background;
    const int bands = rng.uniform_int(params.min_bands, std::max(params.min_bands, params.max_bands));
    for (int b = 0; b < bands; ++b) {
      const double cy = rng.uniform(0.0, height), cx = rng.uniform(0.0, width);
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double len = params.band_length * side * rng.uniform(0.7, 1.3);
      const double wid = params.band_width * side * rng.uniform(0.7, 1.3);
      const double amp = params.background * rng.uniform(0.6, 1.2);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) {
          const double dy = i + 0.5 - cy, dx = j + 0.5 - cx;
          const double u = (dx * ct + dy * st) / len, v = (-dx * st + dy * ct) / wid;
          field(i, j) += amp * std::exp(-0.5 * (u * u + v * v));
        }
    }
  }

  const int cells = params.max_cells <= 0 ? 0 : rng.uniform_int(params.min_cells, params.max_cells);
  for (int c = 0; c < cells; ++c) {
    const double cy = rng.uniform(0.0, height), cx = rng.uniform(0.0, width);
    const double amp = rng.uniform(params.cell_amplitude_lo, params.cell_amplitude_hi);
    const double radius = side * rng.uniform(params.cell_radius_lo, params.cell_radius_hi);
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        const double r = std::hypot(i + 0.5 - cy, j + 0.5 - cx);
        field(i, j) += amp * std::exp(-r / radius);
      }
  }

  if (params.texture_sigma > 0.0) {
    Plane<double> g(height, width);
    for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = rng.normal();
    g = smooth(std::move(g), std::max(1, static_cast<int>(std::lround(params.texture_length * side))), 2);
    const double mean = g.mean();
    const double sd = std::sqrt((g - mean).square().mean());
    if (sd > 0.0) g = (g - mean) / sd;
    const double s = params.texture_sigma;
    field *= (s * g - 0.5 * s * s).exp();
  }

  field = (field < params.rain_threshold).select(0.0, field);
  field = field.min(params.value_max).max(0.0);
  return GridField(field.cast<float>(), static_cast<float>(params.value_max));
}

}  // namespace wdm

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "wdm/errors.hpp"

namespace wdm {

struct EdmCoeffs {
  double c_skip;
  double c_out;
  double c_in;
  double c_noise;
  double weight;
};

struct SigmaScale {
  double sigma;
  double scale;
};

/// Variance-preserving cosine schedule with the EDM sigma/scale
/// reparameterisation: x_t = s(t) * (x_0 + sigma(t) * n), where
/// s(t)^2 = alpha_bar(t) and sigma(t)^2 = (1 - alpha_bar(t)) / alpha_bar(t).
struct NoiseSchedule {
  double total_time = 1.0;
  int steps = 300;
  double sigma_data = 1.0;
  double s_shift = 0.008;

  static constexpr double kAlphaBarFloor = 1e-6;
  static constexpr double kSigmaFloor = 1e-4;

  void check_time(double t) const {
    if (!(t >= 0.0 && t <= total_time)) throw ArgumentError("noise schedule: t outside [0, T]");
  }

  double alpha_bar(double t) const {
    check_time(t);
    const auto f = [this](double u) {
      const double c = std::cos((u + s_shift) / (1.0 + s_shift) * std::numbers::pi / 2.0);
      return c * c;
    };
    if (t == 0.0) return 1.0;
    return std::clamp(f(t / total_time) / f(0.0), kAlphaBarFloor, 1.0);
  }

  SigmaScale sigma_and_scale(double t) const {
    const double ab = alpha_bar(t);
    return {std::sqrt((1.0 - ab) / ab), std::sqrt(ab)};
  }

  double sigma(double t) const { return sigma_and_scale(t).sigma; }

  /// EDM preconditioning; weight * c_out^2 == 1.
  EdmCoeffs edm_coeffs(double sigma) const {
    if (sigma < 0.0 || std::isnan(sigma)) throw ArgumentError("edm_coeffs: sigma must be >= 0");
    const double sd2 = sigma_data * sigma_data;
    const double s2 = sigma * sigma;
    const double denom = s2 + sd2;
    EdmCoeffs c{};
    c.c_skip = sd2 / denom;
    c.c_out = sigma * sigma_data / std::sqrt(denom);
    c.c_in = 1.0 / std::sqrt(denom);
    c.c_noise = std::log(std::max(sigma, kSigmaFloor)) / 4.0;
    c.weight = denom / (s2 * sd2);
    return c;
  }

  double time_at(int i, int n) const { return total_time * static_cast<double>(i) / n; }

  /// beta_i = 1 - alpha_bar(t_i) / alpha_bar(t_{i-1}) on the uniform grid
  /// t_i = i T / n, i = 1..n (index 0 of the result is beta_1).
  std::vector<double> discrete_betas(int n) const {
    if (n < 2) throw ArgumentError("discrete_betas: need at least 2 steps");
    std::vector<double> betas(static_cast<std::size_t>(n));
    double prev = alpha_bar(0.0);
    for (int i = 1; i <= n; ++i) {
      const double cur = alpha_bar(time_at(i, n));
      betas[i - 1] = std::clamp(1.0 - cur / prev, 1e-12, 0.999);
      prev = cur;
    }
    return betas;
  }
};

}  // namespace wdm

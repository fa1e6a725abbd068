#pragma once

// Variance-preserving diffusion in either pixel or wavelet coordinates.
//
// Two equivalent coordinate systems appear here:
//   x_t      = sqrt(abar) x_0 + sqrt(1 - abar) n      (VP state, used by the sampler)
//   x_sigma  = x_t / s = x_0 + sigma n                 (EDM state, seen by the denoiser)
// with s = sqrt(abar) and sigma^2 = (1 - abar) / abar. A denoiser output D
// gives the EDM score (D - x_sigma) / sigma^2; the VP score is that divided
// by s. Feeding the VP score into the Tweedie estimate returns D exactly:
//   (x_t + (1 - abar) (D - x_t / s) / (sigma^2 s)) / s = D.

#include <concepts>
#include <cstdint>
#include <string>

#include "wdm/rng.hpp"
#include "wdm/schedule.hpp"
#include "wdm/tensor.hpp"

namespace wdm {

template <typename A, typename B>
void require_same_size(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError(std::string(what) + ": shape mismatch");
}

/// Closed-form VP marginal sample.
template <typename A, typename B>
typename A::PlainObject forward_sample(const NoiseSchedule& sched, const Eigen::MatrixBase<A>& x0, double t,
                                       const Eigen::MatrixBase<B>& noise) {
  require_same_size(x0, noise, "forward_sample");
  using S = typename A::Scalar;
  const double ab = sched.alpha_bar(t);
  return (S(std::sqrt(ab)) * x0 + S(std::sqrt(1.0 - ab)) * noise).eval();
}

/// Score of the Gaussian transition kernel p_t(x_t | x_0).
template <typename A, typename B>
typename A::PlainObject kernel_score(const NoiseSchedule& sched, const Eigen::MatrixBase<A>& xt,
                                     const Eigen::MatrixBase<B>& x0, double t) {
  require_same_size(xt, x0, "kernel_score");
  using S = typename A::Scalar;
  const double ab = sched.alpha_bar(t);
  if (1.0 - ab <= 0.0) throw SingularityError("kernel_score: zero kernel variance at t = 0");
  return (-(xt - S(std::sqrt(ab)) * x0) / S(1.0 - ab)).eval();
}

/// Score in the EDM variable from a denoiser output.
template <typename A, typename B>
typename A::PlainObject denoiser_to_score(const Eigen::MatrixBase<A>& denoised, const Eigen::MatrixBase<B>& x_sigma,
                                          double sigma) {
  require_same_size(denoised, x_sigma, "denoiser_to_score");
  if (!(sigma > 0.0)) throw SingularityError("denoiser_to_score: sigma must be positive");
  using S = typename A::Scalar;
  return ((denoised - x_sigma) / S(sigma * sigma)).eval();
}

/// Tweedie posterior-mean estimate of x_0 from the VP state and its score,
/// with alpha_bar given directly.
template <typename A, typename B>
typename A::PlainObject tweedie_from_alpha_bar(const Eigen::MatrixBase<A>& xt, const Eigen::MatrixBase<B>& score,
                                               double alpha_bar) {
  require_same_size(xt, score, "tweedie_estimate");
  if (!(alpha_bar > 0.0)) throw SingularityError("tweedie_estimate: alpha_bar must be positive");
  using S = typename A::Scalar;
  return ((xt + S(1.0 - alpha_bar) * score) / S(std::sqrt(alpha_bar))).eval();
}

template <typename A, typename B>
typename A::PlainObject tweedie_estimate(const NoiseSchedule& sched, const Eigen::MatrixBase<A>& xt,
                                         const Eigen::MatrixBase<B>& score, double t) {
  return tweedie_from_alpha_bar(xt, score, sched.alpha_bar(t));
}

/// (state, condition, t) -> VP score with the shape of state.
template <typename F, typename Scalar, typename Cond>
concept ScoreFn = requires(F f, const Mat<Scalar>& x, const Cond& c, double t) {
  { f(x, c, t) } -> std::convertible_to<Mat<Scalar>>;
};

struct SamplerSettings {
  int steps = 300;
  std::uint64_t seed = 0;
};

/// Euler-Maruyama integration of the reverse VP SDE on the uniform grid
/// t_i = i T / N, from t_N = T down to t_0 = 0. One step uses the discrete
/// beta_i as beta(t_i) dt:
///   x <- x + (beta_i / 2) x + beta_i score(x, t_i) + sqrt(beta_i) z
/// The update that lands on t = 0 omits the noise term.
template <typename Scalar, typename Cond, ScoreFn<Scalar, Cond> F>
Mat<Scalar> reverse_sample(const NoiseSchedule& sched, F&& score_fn, const Cond& condition, Eigen::Index rows,
                           Eigen::Index cols, const SamplerSettings& settings) {
  if (settings.steps < 2) throw ArgumentError("reverse_sample: steps must be >= 2");
  const int n = settings.steps;
  const auto betas = sched.discrete_betas(n);
  Rng rng(settings.seed);
  Mat<Scalar> x = rng.normal_matrix<Scalar>(rows, cols);
  for (int i = n; i >= 1; --i) {
    const double t = sched.time_at(i, n);
    const double beta = betas[i - 1];
    const Mat<Scalar> score = score_fn(x, condition, t);
    if (score.rows() != rows || score.cols() != cols) throw DimensionError("reverse_sample: score shape mismatch");
    if (!score.allFinite()) throw NumericalDivergence("reverse_sample: non-finite score", n - i);
    x += Scalar(0.5 * beta) * x + Scalar(beta) * score;
    if (i > 1) x += Scalar(std::sqrt(beta)) * rng.normal_matrix<Scalar>(rows, cols);
    if (!x.allFinite()) throw NumericalDivergence("reverse_sample: non-finite state", n - i);
  }
  return x;
}

}  // namespace wdm

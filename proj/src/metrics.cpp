#include "wdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace wdm::metrics {
namespace {

void require_same(const GridField& a, const GridField& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw DimensionError(std::string(what) + ": field shapes differ");
  if (a.size() == 0) throw DimensionError(std::string(what) + ": empty field");
}

Plane<double> diff(const GridField& pred, const GridField& truth) {
  return pred.values.cast<double>() - truth.values.cast<double>();
}

// Summed-area table with a zero first row and column.
Plane<double> integral(const Plane<double>& p) {
  Plane<double> s = Plane<double>::Zero(p.rows() + 1, p.cols() + 1);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) s(i + 1, j + 1) = p(i, j) + s(i, j + 1) + s(i + 1, j) - s(i, j);
  return s;
}

double box(const Plane<double>& s, Eigen::Index i, Eigen::Index j, int k) {
  return s(i + k, j + k) - s(i, j + k) - s(i + k, j) + s(i, j);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(9);
  ss << v;
  return ss.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("nan"); }

}  // namespace

double mse(const GridField& pred, const GridField& truth) {
  require_same(pred, truth, "mse");
  return diff(pred, truth).square().mean();
}

double mae(const GridField& pred, const GridField& truth) {
  require_same(pred, truth, "mae");
  return diff(pred, truth).abs().mean();
}

double rmse(const GridField& pred, const GridField& truth) { return std::sqrt(mse(pred, truth)); }

double psnr(const GridField& pred, const GridField& truth, double max_val, bool squared_max) {
  const double e = mse(pred, truth);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  const double num = squared_max ? max_val * max_val : max_val;
  return 10.0 * std::log10(num / e);
}

double ssim(const GridField& pred, const GridField& truth, int window, double dynamic_range) {
  require_same(pred, truth, "ssim");
  if (window < 1 || pred.height() < window || pred.width() < window)
    throw DimensionError("ssim: field smaller than the window");
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const Plane<double> x = pred.values.cast<double>(), y = truth.values.cast<double>();
  const Plane<double> sx = integral(x), sy = integral(y);
  const Plane<double> sxx = integral(x * x), syy = integral(y * y), sxy = integral(x * y);
  const double n = double(window) * window;
  const Eigen::Index ni = x.rows() - window + 1, nj = x.cols() - window + 1;
  double total = 0.0;
  for (Eigen::Index i = 0; i < ni; ++i)
    for (Eigen::Index j = 0; j < nj; ++j) {
      const double mx = box(sx, i, j, window) / n, my = box(sy, i, j, window) / n;
      const double vx = std::max(0.0, box(sxx, i, j, window) / n - mx * mx);
      const double vy = std::max(0.0, box(syy, i, j, window) / n - my * my);
      const double cxy = box(sxy, i, j, window) / n - mx * my;
      // l * c * s with C3 = C2 / 2 collapses to the two-factor form.
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / double(ni * nj);
}

Contingency contingency(const GridField& pred, const GridField& truth, double threshold) {
  require_same(pred, truth, "csi");
  Contingency c;
  const float t = static_cast<float>(threshold);
  for (Eigen::Index k = 0; k < pred.size(); ++k) {
    const bool p = pred.values.data()[k] > t, o = truth.values.data()[k] > t;
    c.hits += p && o;
    c.misses += !p && o;
    c.false_alarms += p && !o;
  }
  return c;
}

std::optional<double> csi(const GridField& pred, const GridField& truth, double threshold) {
  const Contingency c = contingency(pred, truth, threshold);
  const long denom = c.hits + c.misses + c.false_alarms;
  if (denom == 0) return std::nullopt;
  return double(c.hits) / double(denom);
}

std::optional<double> hi_mse(const GridField& pred, const GridField& truth, double threshold) {
  require_same(pred, truth, "hi_mse");
  const auto mask = truth.values > static_cast<float>(threshold);
  const auto count = mask.count();
  if (count == 0) return std::nullopt;
  return mask.select(diff(pred, truth).square(), 0.0).sum() / double(count);
}

double empirical_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ArgumentError("empirical_quantile: empty data");
  const double pos = std::clamp(q, 0.0, 1.0) * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile_abs_error(const GridField& pred, const GridField& truth, QuantileRange range, double step) {
  if (pred.size() == 0 || truth.size() == 0) throw ArgumentError("quantile_abs_error: empty field");
  if (!(range.lo >= 0.0 && range.lo < range.hi && range.hi <= 1.0))
    throw ArgumentError("quantile_abs_error: need 0 <= lo < hi <= 1");
  if (!(step > 0.0)) throw ArgumentError("quantile_abs_error: step must be positive");
  auto sorted = [](const GridField& f) {
    std::vector<double> v(f.values.data(), f.values.data() + f.size());
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto p = sorted(pred), t = sorted(truth);
  const auto levels = static_cast<long>(std::floor((range.hi - range.lo) / step + 1e-9)) + 1;
  double total = 0.0;
  for (long k = 0; k < levels; ++k) {
    const double q = std::min(range.lo + double(k) * step, range.hi);
    total += std::abs(empirical_quantile(p, q) - empirical_quantile(t, q));
  }
  return total / double(levels);
}

PairMetrics evaluate_pair(const GridField& pred, const GridField& truth, const MetricConfig& cfg) {
  PairMetrics m;
  m.mae = mae(pred, truth);
  m.rmse = rmse(pred, truth);
  m.psnr = psnr(pred, truth, cfg.value_max, cfg.psnr_squared_max);
  m.ssim = ssim(pred, truth, cfg.ssim_window, cfg.value_max);
  m.hi_mse = hi_mse(pred, truth, cfg.hi_threshold);
  double sum = 0.0;
  int defined = 0;
  for (std::size_t k = 0; k < kCsiThresholds.size(); ++k) {
    m.csi[k] = csi(pred, truth, kCsiThresholds[k]);
    if (m.csi[k]) {
      sum += *m.csi[k];
      ++defined;
    }
  }
  if (defined > 0) m.csi_avg = sum / defined;
  for (std::size_t r = 0; r < kQuantileRanges.size(); ++r)
    m.quantile_error[r] = quantile_abs_error(pred, truth, kQuantileRanges[r], cfg.quantile_step);
  return m;
}

MetricReport evaluate_set(const std::vector<NamedPair>& pairs, const MetricConfig& cfg) {
  if (pairs.empty()) throw ArgumentError("evaluate_set: no pairs");
  MetricReport report;
  for (const auto& p : pairs) {
    report.pairs.push_back(evaluate_pair(*p.pred, *p.truth, cfg));
    report.pairs.back().name = p.name;
  }

  Aggregate& agg = report.aggregate;
  agg.pairs = static_cast<long>(pairs.size());
  agg.mean.name = "mean";
  const double n = double(pairs.size());
  double psnr_sum = 0.0, hi_sum = 0.0;
  std::array<double, kCsiThresholds.size()> csi_sum{};
  for (const auto& m : report.pairs) {
    agg.mean.mae += m.mae / n;
    agg.mean.rmse += m.rmse / n;
    agg.mean.ssim += m.ssim / n;
    for (std::size_t r = 0; r < kQuantileRanges.size(); ++r) agg.mean.quantile_error[r] += m.quantile_error[r] / n;
    if (std::isfinite(m.psnr)) psnr_sum += m.psnr; else ++agg.psnr_excluded;
    if (m.hi_mse) hi_sum += *m.hi_mse; else ++agg.hi_mse_excluded;
    for (std::size_t k = 0; k < kCsiThresholds.size(); ++k) {
      if (m.csi[k]) csi_sum[k] += *m.csi[k]; else ++agg.csi_excluded[k];
    }
  }
  const auto mean_or_nan = [&](double sum, long excluded) {
    const long used = agg.pairs - excluded;
    return used > 0 ? sum / double(used) : std::numeric_limits<double>::quiet_NaN();
  };
  agg.mean.psnr = agg.psnr_excluded == agg.pairs ? std::numeric_limits<double>::infinity()
                                                  : mean_or_nan(psnr_sum, agg.psnr_excluded);
  if (agg.hi_mse_excluded < agg.pairs) agg.mean.hi_mse = mean_or_nan(hi_sum, agg.hi_mse_excluded);
  double avg = 0.0;
  int defined = 0;
  for (std::size_t k = 0; k < kCsiThresholds.size(); ++k) {
    if (agg.csi_excluded[k] < agg.pairs) {
      agg.mean.csi[k] = mean_or_nan(csi_sum[k], agg.csi_excluded[k]);
      avg += *agg.mean.csi[k];
      ++defined;
    }
  }
  if (defined > 0) agg.mean.csi_avg = avg / defined;
  return report;
}

std::string report_header() {
  std::string h = "method,pair,mae,rmse,psnr,ssim,hi_mse";
  for (double t : kCsiThresholds) h += ",csi_" + std::to_string(int(t));
  h += ",csi_avg,qerr_683_936,qerr_936_975,qerr_975_1000";
  return h;
}

void write_report_rows(std::ostream& os, const std::string& method, const MetricReport& report) {
  auto row = [&](const PairMetrics& m) {
    os << method << ',' << m.name << ',' << fmt(m.mae) << ',' << fmt(m.rmse) << ',' << fmt(m.psnr) << ','
       << fmt(m.ssim) << ',' << fmt(m.hi_mse);
    for (const auto& c : m.csi) os << ',' << fmt(c);
    os << ',' << fmt(m.csi_avg);
    for (double q : m.quantile_error) os << ',' << fmt(q);
    os << '\n';
  };
  for (const auto& m : report.pairs) row(m);
  const Aggregate& a = report.aggregate;
  row(a.mean);
  os << method << ",excluded,0,0," << a.psnr_excluded << ",0," << a.hi_mse_excluded;
  for (long c : a.csi_excluded) os << ',' << c;
  os << ",0,0,0,0\n";
}

void write_csi_curve(std::ostream& os, const std::vector<std::pair<std::string, const MetricReport*>>& reports) {
  os << "threshold";
  for (const auto& [name, _] : reports) os << ',' << name;
  os << '\n';
  for (std::size_t k = 0; k < kCsiThresholds.size(); ++k) {
    os << kCsiThresholds[k];
    for (const auto& [_, r] : reports) os << ',' << fmt(r->aggregate.mean.csi[k]);
    os << '\n';
  }
}

}  // namespace wdm::metrics

#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wdm/grid.hpp"

namespace wdm::metrics {

inline constexpr std::array<double, 9> kCsiThresholds = {20, 25, 30, 35, 40, 45, 50, 55, 60};

struct QuantileRange {
  double lo;
  double hi;
};

/// Ranges anchored at the 20 / 40 / 50 dBZ percentiles of the reference data.
inline constexpr std::array<QuantileRange, 3> kQuantileRanges = {{{0.683, 0.936}, {0.936, 0.975}, {0.975, 1.0}}};

struct MetricConfig {
  double value_max = 80.0;
  bool psnr_squared_max = false;
  int ssim_window = 7;
  double hi_threshold = 55.0;
  double quantile_step = 0.001;
};

double mae(const GridField& pred, const GridField& truth);
double rmse(const GridField& pred, const GridField& truth);
double mse(const GridField& pred, const GridField& truth);

/// 10 log10(MAX / MSE), or 10 log10(MAX^2 / MSE) with `squared_max`.
/// +inf when the fields are identical.
double psnr(const GridField& pred, const GridField& truth, double max_val = 80.0, bool squared_max = false);

/// Mean SSIM over all valid `window` x `window` positions, uniform window
/// weights, population (1/N) moments, C1 = (0.01 L)^2, C2 = (0.03 L)^2.
double ssim(const GridField& pred, const GridField& truth, int window = 7, double dynamic_range = 80.0);

struct Contingency {
  long hits = 0;
  long misses = 0;
  long false_alarms = 0;
};

Contingency contingency(const GridField& pred, const GridField& truth, double threshold);

/// hits / (hits + misses + false alarms); empty when there is no event.
std::optional<double> csi(const GridField& pred, const GridField& truth, double threshold);

/// MSE over pixels whose truth exceeds `threshold`; empty when none do.
std::optional<double> hi_mse(const GridField& pred, const GridField& truth, double threshold = 55.0);

/// Linear-interpolation empirical quantile of sorted data.
double empirical_quantile(const std::vector<double>& sorted, double q);

/// Mean |Q_pred(q) - Q_truth(q)| over q = lo, lo + step, ..., hi.
double quantile_abs_error(const GridField& pred, const GridField& truth, QuantileRange range, double step = 0.001);

struct PairMetrics {
  std::string name;
  double mae = 0, rmse = 0, psnr = 0, ssim = 0;
  std::optional<double> hi_mse;
  std::array<std::optional<double>, kCsiThresholds.size()> csi{};
  std::optional<double> csi_avg;
  std::array<double, kQuantileRanges.size()> quantile_error{};
};

/// Means over the pairs; undefined values are skipped and counted.
struct Aggregate {
  PairMetrics mean;
  long pairs = 0;
  long psnr_excluded = 0;
  long hi_mse_excluded = 0;
  std::array<long, kCsiThresholds.size()> csi_excluded{};
};

struct MetricReport {
  std::vector<PairMetrics> pairs;
  Aggregate aggregate;
};

PairMetrics evaluate_pair(const GridField& pred, const GridField& truth, const MetricConfig& cfg = {});

struct NamedPair {
  std::string name;
  const GridField* pred;
  const GridField* truth;
};

MetricReport evaluate_set(const std::vector<NamedPair>& pairs, const MetricConfig& cfg = {});

/// Per-pair rows followed by "mean" and "excluded" rows, all tagged with `method`.
void write_report_rows(std::ostream& os, const std::string& method, const MetricReport& report);
std::string report_header();

/// threshold, then one aggregate-CSI column per method.
void write_csi_curve(std::ostream& os, const std::vector<std::pair<std::string, const MetricReport*>>& reports);

}  // namespace wdm::metrics

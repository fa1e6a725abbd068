#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "test_util.hpp"
#include "wdm/metrics.hpp"

using namespace wdm;
using namespace wdm::metrics;

namespace {

GridField field(int h, int w, std::initializer_list<float> v) {
  Plane<float> p(h, w);
  std::copy(v.begin(), v.end(), p.data());
  return GridField(p);
}

std::vector<std::pair<GridField, GridField>> random_pairs() {
  std::vector<std::pair<GridField, GridField>> out;
  for (std::uint64_t i = 0; i < 100; ++i)
    out.emplace_back(testing_util::random_field(16, 16, 2 * i + 1), testing_util::random_field(16, 16, 2 * i + 2));
  return out;
}

double naive_ssim(const GridField& a, const GridField& b, int k, double range) {
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double total = 0.0;
  int windows = 0;
  for (int i = 0; i + k <= a.height(); ++i)
    for (int j = 0; j + k <= a.width(); ++j) {
      double mx = 0, my = 0;
      for (int y = i; y < i + k; ++y)
        for (int x = j; x < j + k; ++x) {
          mx += a.values(y, x);
          my += b.values(y, x);
        }
      mx /= k * k;
      my /= k * k;
      double vx = 0, vy = 0, cxy = 0;
      for (int y = i; y < i + k; ++y)
        for (int x = j; x < j + k; ++x) {
          const double dx = a.values(y, x) - mx, dy = b.values(y, x) - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      vx /= k * k;
      vy /= k * k;
      cxy /= k * k;
      const double sx = std::sqrt(vx), sy = std::sqrt(vy), c3 = c2 / 2;
      const double l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
      const double c = (2 * sx * sy + c2) / (vx + vy + c2);
      const double s = (cxy + c3) / (sx * sy + c3);
      total += l * c * s;
      ++windows;
    }
  return total / windows;
}

}  // namespace

TEST(PointMetrics, HandExamples) {
  const GridField a = field(2, 2, {0, 1, 2, 3}), z = GridField::zeros(2, 2);
  EXPECT_DOUBLE_EQ(mae(a, z), 1.5);
  EXPECT_DOUBLE_EQ(mse(a, z), 3.5);
  EXPECT_DOUBLE_EQ(rmse(a, z), std::sqrt(3.5));
  EXPECT_THROW(mse(a, GridField::zeros(2, 3)), DimensionError);
}

TEST(PointMetrics, NaiveLoopOracle) {
  for (const auto& [p, t] : random_pairs()) {
    double se = 0, ae = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const double d = double(p.values(y, x)) - double(t.values(y, x));
        se += d * d;
        ae += std::abs(d);
      }
    EXPECT_NEAR(mse(p, t), se / 256, 1e-9);
    EXPECT_NEAR(mae(p, t), ae / 256, 1e-9);
    EXPECT_NEAR(psnr(p, t), 10 * std::log10(80.0 / (se / 256)), 1e-9);
    EXPECT_NEAR(psnr(p, t, 80.0, true), 10 * std::log10(6400.0 / (se / 256)), 1e-9);
  }
}

TEST(Psnr, Examples) {
  const GridField z = GridField::zeros(3, 3), one = GridField::constant(3, 3, 1.0f);
  EXPECT_TRUE(std::isinf(psnr(z, z)));
  EXPECT_GT(psnr(z, z), 0.0);
  EXPECT_NEAR(psnr(one, z), 10 * std::log10(80.0), 1e-12);
  EXPECT_NEAR(psnr(one, z, 80.0, true), 20 * std::log10(80.0), 1e-12);
}

TEST(Ssim, IdenticalFieldsScoreOne) {
  const GridField f = testing_util::random_field(12, 12, 3);
  EXPECT_NEAR(ssim(f, f), 1.0, 1e-12);
  const GridField c = GridField::constant(8, 8, 17.0f);
  EXPECT_NEAR(ssim(c, c), 1.0, 1e-12);
}

TEST(Ssim, NaiveOracleSymmetryAndBounds) {
  for (const auto& [p, t] : random_pairs()) {
    const double s = ssim(p, t);
    EXPECT_NEAR(s, naive_ssim(p, t, 7, 80.0), 1e-9);
    EXPECT_NEAR(s, ssim(t, p), 1e-12);
    EXPECT_LE(s, 1.0);
    EXPECT_GE(s, -1.0);
  }
}

TEST(Ssim, WindowLargerThanField) {
  EXPECT_THROW(ssim(GridField::zeros(5, 5), GridField::zeros(5, 5)), DimensionError);
  EXPECT_NO_THROW(ssim(GridField::zeros(5, 5), GridField::zeros(5, 5), 5));
}

TEST(Csi, HandExample) {
  const GridField truth = field(2, 2, {30, 10, 50, 0}), pred = field(2, 2, {25, 30, 10, 0});
  const Contingency c = contingency(pred, truth, 20);
  EXPECT_EQ(c.hits, 1);
  EXPECT_EQ(c.false_alarms, 1);
  EXPECT_EQ(c.misses, 1);
  EXPECT_DOUBLE_EQ(*csi(pred, truth, 20), 1.0 / 3.0);
}

TEST(Csi, TwoHitsOneMissOneFalseAlarm) {
  const GridField truth = field(1, 4, {30, 30, 30, 0}), pred = field(1, 4, {30, 30, 0, 30});
  EXPECT_DOUBLE_EQ(*csi(pred, truth, 20), 0.5);
}

TEST(Csi, StrictThresholdAndNoEvent) {
  const GridField at = GridField::constant(2, 2, 20.0f);
  EXPECT_FALSE(csi(at, at, 20).has_value());
  EXPECT_DOUBLE_EQ(*csi(at, at, 19.5), 1.0);
  EXPECT_FALSE(csi(GridField::zeros(3, 3), GridField::zeros(3, 3), 20).has_value());
}

TEST(Csi, NaiveOracle) {
  for (const auto& [p, t] : random_pairs())
    for (double th : kCsiThresholds) {
      long h = 0, m = 0, f = 0;
      for (int k = 0; k < 256; ++k) {
        const bool pe = p.values.data()[k] > th, te = t.values.data()[k] > th;
        h += pe && te;
        m += !pe && te;
        f += pe && !te;
      }
      ASSERT_TRUE(csi(p, t, th).has_value());
      EXPECT_DOUBLE_EQ(*csi(p, t, th), double(h) / double(h + m + f));
    }
}

// Making a pixel's prediction exact turns a miss into a hit or removes a
// false alarm, so CSI never goes down.
TEST(Csi, CorrectingPixelsIsMonotone) {
  for (const auto& [p, t] : random_pairs()) {
    GridField q = p;
    double prev = *csi(q, t, 40);
    for (int k = 0; k < 256; k += 7) {
      q.values.data()[k] = t.values.data()[k];
      const auto now = csi(q, t, 40);
      ASSERT_TRUE(now.has_value());
      EXPECT_GE(*now, prev - 1e-15);
      prev = *now;
    }
  }
}

TEST(HiMse, Examples) {
  const GridField truth = field(1, 4, {60, 70, 10, 55}), pred = field(1, 4, {58, 74, 0, 0});
  EXPECT_DOUBLE_EQ(*hi_mse(pred, truth), (4.0 + 16.0) / 2.0);
  EXPECT_FALSE(hi_mse(pred, GridField::constant(1, 4, 55.0f)).has_value());
}

TEST(Quantile, Examples) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 1.0 / 3.0), 2.0);
  EXPECT_THROW(empirical_quantile({}, 0.5), ArgumentError);
}

TEST(Quantile, ShiftedFieldErrorIsTheShift) {
  const GridField t = testing_util::random_field(10, 10, 4, 0, 60);
  GridField p = t;
  p.values += 5.0f;
  for (const auto& r : kQuantileRanges) EXPECT_NEAR(quantile_abs_error(p, t, r), 5.0, 1e-5);
  EXPECT_EQ(quantile_abs_error(t, t, kQuantileRanges[0]), 0.0);
  EXPECT_THROW(quantile_abs_error(p, t, {0.5, 0.4}), ArgumentError);
  EXPECT_THROW(quantile_abs_error(p, t, {0.1, 0.4}, 0.0), ArgumentError);
}

TEST(Quantile, PermutationInvariant) {
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const GridField p = testing_util::random_field(16, 16, 100 + i), t = testing_util::random_field(16, 16, 200 + i);
    GridField shuffled = p;
    std::vector<float> v(shuffled.values.data(), shuffled.values.data() + 256);
    std::shuffle(v.begin(), v.end(), rng.engine());
    std::copy(v.begin(), v.end(), shuffled.values.data());
    for (const auto& r : kQuantileRanges)
      EXPECT_DOUBLE_EQ(quantile_abs_error(shuffled, t, r), quantile_abs_error(p, t, r));
  }
}

TEST(EvaluateSet, SinglePairMatchesEvaluatePair) {
  const GridField p = testing_util::random_field(16, 16, 7), t = testing_util::random_field(16, 16, 8);
  const MetricReport r = evaluate_set({{"a", &p, &t}});
  const PairMetrics m = evaluate_pair(p, t);
  EXPECT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].name, "a");
  EXPECT_DOUBLE_EQ(r.aggregate.mean.rmse, m.rmse);
  EXPECT_DOUBLE_EQ(r.aggregate.mean.psnr, m.psnr);
  EXPECT_DOUBLE_EQ(*r.aggregate.mean.csi_avg, *m.csi_avg);
  EXPECT_THROW(evaluate_set({}), ArgumentError);
}

TEST(EvaluateSet, DuplicatedPairsKeepTheMean) {
  const GridField p = testing_util::random_field(16, 16, 9), t = testing_util::random_field(16, 16, 10);
  const MetricReport one = evaluate_set({{"a", &p, &t}});
  const MetricReport three = evaluate_set({{"a", &p, &t}, {"b", &p, &t}, {"c", &p, &t}});
  EXPECT_NEAR(three.aggregate.mean.mae, one.aggregate.mean.mae, 1e-12);
  EXPECT_NEAR(three.aggregate.mean.ssim, one.aggregate.mean.ssim, 1e-12);
  EXPECT_NEAR(*three.aggregate.mean.csi_avg, *one.aggregate.mean.csi_avg, 1e-12);
  for (std::size_t r = 0; r < kQuantileRanges.size(); ++r)
    EXPECT_NEAR(three.aggregate.mean.quantile_error[r], one.aggregate.mean.quantile_error[r], 1e-12);
}

// A: exact prediction of a 22 dBZ field, B: 62 dBZ everywhere predicted as 0.
TEST(EvaluateSet, HandBuiltExclusions) {
  const GridField a = GridField::constant(8, 8, 22.0f);
  const GridField b_truth = GridField::constant(8, 8, 62.0f), b_pred = GridField::zeros(8, 8);
  const GridField c = testing_util::random_field(8, 8, 11), c_truth = testing_util::random_field(8, 8, 12);
  const MetricReport r = evaluate_set({{"A", &a, &a}, {"B", &b_pred, &b_truth}, {"C", &c, &c_truth}});
  const Aggregate& g = r.aggregate;
  EXPECT_EQ(g.pairs, 3);
  EXPECT_EQ(g.psnr_excluded, 1);
  EXPECT_NEAR(g.mean.psnr, (r.pairs[1].psnr + r.pairs[2].psnr) / 2, 1e-12);
  EXPECT_EQ(g.hi_mse_excluded, 1 + (r.pairs[2].hi_mse ? 0 : 1));
  EXPECT_EQ(g.csi_excluded[0], 0);   // 20 dBZ: all three have events
  EXPECT_EQ(g.csi_excluded[1], 1);   // 25 dBZ: A has none
  EXPECT_NEAR(*g.mean.csi[0], (1.0 + 0.0 + *r.pairs[2].csi[0]) / 3, 1e-12);
  EXPECT_NEAR(*g.mean.csi[1], (0.0 + *r.pairs[2].csi[1]) / 2, 1e-12);
  double avg = 0;
  for (const auto& v : g.mean.csi) avg += *v;
  EXPECT_NEAR(*g.mean.csi_avg, avg / 9, 1e-12);
}

// The aggregate CSI average is taken over per-threshold means, not over the
// per-pair averages.
TEST(EvaluateSet, CsiAverageOverThresholdMeans) {
  const GridField a = GridField::constant(8, 8, 22.0f);
  const GridField b_truth = GridField::constant(8, 8, 62.0f), b_pred = GridField::zeros(8, 8);
  const MetricReport r = evaluate_set({{"A", &a, &a}, {"B", &b_pred, &b_truth}});
  EXPECT_DOUBLE_EQ(*r.pairs[0].csi_avg, 1.0);
  EXPECT_DOUBLE_EQ(*r.pairs[1].csi_avg, 0.0);
  EXPECT_NEAR(*r.aggregate.mean.csi_avg, 0.5 / 9, 1e-12);
}

TEST(Report, RowsMatchHeader) {
  const GridField p = testing_util::random_field(8, 8, 1), t = testing_util::random_field(8, 8, 2);
  const MetricReport r = evaluate_set({{"0000", &p, &t}, {"0001", &t, &t}});
  std::ostringstream os;
  write_report_rows(os, "haar-1", r);
  const auto columns = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  const long want = columns(report_header());
  std::istringstream in(os.str());
  std::string line;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    EXPECT_EQ(columns(line), want) << line;
    names.push_back(line.substr(7, line.find(',', 7) - 7));
  }
  EXPECT_EQ(names, (std::vector<std::string>{"0000", "0001", "mean", "excluded"}));

  std::ostringstream curve;
  write_csi_curve(curve, {{"haar-1", &r}, {"bicubic", &r}});
  const std::string s = curve.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 10);
  EXPECT_EQ(s.substr(0, s.find('\n')), "threshold,haar-1,bicubic");
}

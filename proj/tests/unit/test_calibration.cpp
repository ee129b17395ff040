#include <gtest/gtest.h>

#include <cmath>

#include "bridgetriage/calibration.hpp"
#include "support.hpp"

namespace bt {
namespace {

struct Synthetic {
  std::vector<PointPrediction> preds;
  std::vector<double> truths;
};

// y = mu + noise_scale * sigma * eps
Synthetic synthetic(std::size_t n, double noise_scale, std::uint64_t seed) {
  test::Gen g(seed);
  Synthetic s;
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = g.uniform(0.5, 3.0);
    const double sigma = g.uniform(0.01, 0.3);
    s.preds.push_back({mu, sigma});
    s.truths.push_back(mu + noise_scale * sigma * g.normal());
  }
  return s;
}

TEST(Quantile, TwoSidedLevels) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
  EXPECT_THROW(normal_quantile(1.0), std::invalid_argument);
}

TEST(Levels, DefaultGridAndKappaGrid) {
  const auto l = default_levels();
  ASSERT_EQ(l.size(), 19u);
  EXPECT_NEAR(l.front(), 0.05, 1e-15);
  EXPECT_NEAR(l.back(), 0.95, 1e-15);
  const auto k = kappa_grid();
  ASSERT_EQ(k.size(), 91u);
  EXPECT_NEAR(k.front(), 0.5, 1e-15);
  EXPECT_NEAR(k.back(), 5.0, 1e-12);
}

TEST(Coverage, ZeroWidthIntervals) {
  const std::vector<PointPrediction> p{{1.0, 0.0}, {2.0, 0.0}};
  const std::vector<double> exact{1.0, 2.0};
  const std::vector<double> off{1.1, 1.9};
  for (double level : default_levels()) {
    EXPECT_EQ(empirical_coverage(p, exact, level, 1.0), 1.0);
    EXPECT_EQ(empirical_coverage(p, off, level, 1.0), 0.0);
  }
}

TEST(Coverage, SamplingOracleAtNinetyFivePercent) {
  const auto s = synthetic(100000, 1.0, 1);
  EXPECT_NEAR(empirical_coverage(s.preds, s.truths, 0.95, 1.0), 0.95, 0.01);
}

TEST(Coverage, RejectsBadInput) {
  const std::vector<PointPrediction> p{{1.0, 0.1}};
  const std::vector<double> y{1.0};
  EXPECT_THROW(empirical_coverage({}, {}, 0.5, 1.0), std::invalid_argument);
  EXPECT_THROW(empirical_coverage(p, y, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(empirical_coverage(p, std::vector<double>{1.0, 2.0}, 0.5, 1.0), std::invalid_argument);
  const std::vector<PointPrediction> neg{{1.0, -0.1}};
  EXPECT_THROW(empirical_coverage(neg, y, 0.5, 1.0), std::invalid_argument);
}

TEST(Coverage, MonotoneInLevelAndKappa) {
  const auto s = synthetic(2000, 1.4, 2);
  double prev = 0.0;
  for (double level : default_levels()) {
    const double c = empirical_coverage(s.preds, s.truths, level, 1.0);
    EXPECT_GE(c, prev);
    prev = c;
  }
  prev = 0.0;
  for (double kappa : kappa_grid()) {
    const double c = empirical_coverage(s.preds, s.truths, 0.6, kappa);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Metrics, CalibratedDataHasSmallErrors) {
  const auto s = synthetic(100000, 1.0, 3);
  const auto r = calibration_metrics(s.preds, s.truths, default_levels(), 1.0);
  EXPECT_LT(r.tce, 0.02);
  EXPECT_LT(std::abs(r.cb), 0.02);
  EXPECT_GE(r.tce, std::abs(r.cb));
}

TEST(Metrics, DegenerateKappaLimits) {
  const auto s = synthetic(500, 1.0, 4);
  const auto tiny = calibration_metrics(s.preds, s.truths, default_levels(), 1e-300);
  EXPECT_NEAR(tiny.tce, 0.5, 1e-12);
  EXPECT_NEAR(tiny.cb, 0.5, 1e-12);
  const auto huge = calibration_metrics(s.preds, s.truths, default_levels(), 1e300);
  EXPECT_NEAR(huge.tce, 0.5, 1e-12);
  EXPECT_NEAR(huge.cb, -0.5, 1e-12);
}

TEST(Metrics, OverconfidenceGivesPositiveBias) {
  const auto s = synthetic(20000, 2.0, 5);
  EXPECT_GT(calibration_metrics(s.preds, s.truths, default_levels(), 1.0).cb, 0.0);
}

TEST(FitKappa, RecoversKnownNoiseScale) {
  const auto one = synthetic(100000, 1.0, 6);
  const double k1 = fit_kappa(one.preds, one.truths, default_levels());
  EXPECT_GE(k1, 0.9);
  EXPECT_LE(k1, 1.1);
  const auto two = synthetic(100000, 2.0, 7);
  const double k2 = fit_kappa(two.preds, two.truths, default_levels());
  EXPECT_GE(k2, 1.9);
  EXPECT_LE(k2, 2.1);
}

TEST(FitKappa, NeverWorseThanUnitScale) {
  test::Gen g(8);
  for (int t = 0; t < 20; ++t) {
    const auto s = synthetic(300, g.uniform(0.3, 4.0), g.u64());
    const auto levels = default_levels();
    const double k = fit_kappa(s.preds, s.truths, levels);
    EXPECT_LE(calibration_metrics(s.preds, s.truths, levels, k).tce,
              calibration_metrics(s.preds, s.truths, levels, 1.0).tce);
  }
}

TEST(FitKappa, TiesPreferLargerKappa) {
  // Every grid kappa covers the single point at every level: all TCE equal.
  const std::vector<PointPrediction> p{{1.0, 0.5}};
  const std::vector<double> y{1.0};
  EXPECT_DOUBLE_EQ(fit_kappa(p, y, default_levels()), 5.0);
}

TEST(FitKappa, AllZeroSigmaIsUnfittable) {
  const std::vector<PointPrediction> p{{1.0, 0.0}, {2.0, 0.0}};
  const std::vector<double> y{1.1, 2.0};
  EXPECT_THROW(fit_kappa(p, y, default_levels()), UnfittableError);
}

TEST(Report, JsonRoundTripAndTable) {
  const auto s = synthetic(1000, 1.2, 9);
  const auto r = calibration_metrics(s.preds, s.truths, default_levels(), 1.3);
  const auto j = to_json(r);
  for (const char* key : {"levels", "empirical_coverage", "tce", "cb", "kappa_used"}) EXPECT_TRUE(j.contains(key));
  const auto back = calibration_report_from_json(j);
  EXPECT_EQ(back.levels, r.levels);
  EXPECT_EQ(back.empirical_coverage, r.empirical_coverage);
  EXPECT_EQ(back.tce, r.tce);
  EXPECT_EQ(back.cb, r.cb);
  EXPECT_EQ(back.kappa_used, 1.3);
  const auto table = render_table(r, "ms");
  EXPECT_NE(table.find("TCE"), std::string::npos);
  EXPECT_NE(table.find("0.95"), std::string::npos);
}

}  // namespace
}  // namespace bt

#pragma once

// Coverage-based calibration of Gaussian predictive intervals and the
// per-head post-hoc scale factor kappa.
//
// For nominal level p the interval is mu +- z kappa sigma with
// z = Phi^-1((1 + p) / 2). Over a level grid,
//   TCE = mean |p - coverage(p)|,   CB = mean (p - coverage(p)),
// so CB > 0 means the intervals cover less than promised (overconfident).

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bt {

struct PointPrediction {
  double mu = 0.0;
  double sigma = 0.0;
};

// Inverse standard normal CDF.
double normal_quantile(double p);

// 0.05, 0.10, ..., 0.95
std::vector<double> default_levels();

double empirical_coverage(std::span<const PointPrediction> preds, std::span<const double> truths, double level,
                          double kappa);

struct CalibrationReport {
  std::vector<double> levels;
  std::vector<double> empirical_coverage;
  double tce = 0.0;
  double cb = 0.0;
  double kappa_used = 1.0;
};

CalibrationReport calibration_metrics(std::span<const PointPrediction> preds, std::span<const double> truths,
                                      std::span<const double> levels, double kappa);

class UnfittableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grid kappa in {0.50, 0.55, ..., 5.00} minimizing TCE; ties go to the
// larger kappa. Throws UnfittableError when every sigma is zero.
double fit_kappa(std::span<const PointPrediction> preds, std::span<const double> truths,
                 std::span<const double> levels);

std::vector<double> kappa_grid();

nlohmann::json to_json(const CalibrationReport& r);
CalibrationReport calibration_report_from_json(const nlohmann::json& j);

// Aligned text table for terminals.
std::string render_table(const CalibrationReport& r, const std::string& title = {});

}  // namespace bt

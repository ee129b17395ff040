#include "bridgetriage/calibration.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace bt {

namespace {

void check_inputs(std::span<const PointPrediction> preds, std::span<const double> truths) {
  if (preds.empty()) throw std::invalid_argument("calibration: predictions are empty");
  if (preds.size() != truths.size()) throw std::invalid_argument("calibration: predictions and truths differ in length");
  for (const auto& p : preds) {
    if (!(p.sigma >= 0.0)) throw std::invalid_argument("calibration: sigma must be nonnegative");
  }
}

// Tolerance for comparing TCE values that differ only by summation noise.
constexpr double kTieTolerance = 1e-12;

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::vector<double> default_levels() {
  std::vector<double> levels;
  for (int i = 1; i <= 19; ++i) levels.push_back(i / 20.0);
  return levels;
}

std::vector<double> kappa_grid() {
  std::vector<double> grid;
  for (int i = 50; i <= 500; i += 5) grid.push_back(i / 100.0);
  return grid;
}

double empirical_coverage(std::span<const PointPrediction> preds, std::span<const double> truths, double level,
                          double kappa) {
  check_inputs(preds, truths);
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("calibration: level must lie in (0, 1)");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::size_t covered = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (std::abs(truths[i] - preds[i].mu) <= z * kappa * preds[i].sigma) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(preds.size());
}

CalibrationReport calibration_metrics(std::span<const PointPrediction> preds, std::span<const double> truths,
                                      std::span<const double> levels, double kappa) {
  check_inputs(preds, truths);
  if (levels.empty()) throw std::invalid_argument("calibration: level grid is empty");
  CalibrationReport r;
  r.kappa_used = kappa;
  r.levels.assign(levels.begin(), levels.end());
  double abs_sum = 0.0;
  double signed_sum = 0.0;
  for (double p : levels) {
    const double cov = empirical_coverage(preds, truths, p, kappa);
    r.empirical_coverage.push_back(cov);
    abs_sum += std::abs(p - cov);
    signed_sum += p - cov;
  }
  const double n = static_cast<double>(levels.size());
  r.tce = abs_sum / n;
  r.cb = signed_sum / n;
  return r;
}

double fit_kappa(std::span<const PointPrediction> preds, std::span<const double> truths,
                 std::span<const double> levels) {
  check_inputs(preds, truths);
  bool any_spread = false;
  for (const auto& p : preds) any_spread = any_spread || p.sigma > 0.0;
  if (!any_spread) throw UnfittableError("fit_kappa: every predictive sigma is zero, no scale can be fitted");

  double best_kappa = 0.0;
  double best_tce = std::numeric_limits<double>::infinity();
  for (double kappa : kappa_grid()) {
    const double tce = calibration_metrics(preds, truths, levels, kappa).tce;
    // Ascending grid: "<=" hands ties to the larger kappa.
    if (tce <= best_tce + kTieTolerance) {
      best_tce = std::min(tce, best_tce);
      best_kappa = kappa;
    }
  }
  return best_kappa;
}

nlohmann::json to_json(const CalibrationReport& r) {
  return nlohmann::json{{"levels", r.levels},
                        {"empirical_coverage", r.empirical_coverage},
                        {"tce", r.tce},
                        {"cb", r.cb},
                        {"kappa_used", r.kappa_used}};
}

CalibrationReport calibration_report_from_json(const nlohmann::json& j) {
  CalibrationReport r;
  r.levels = j.at("levels").get<std::vector<double>>();
  r.empirical_coverage = j.at("empirical_coverage").get<std::vector<double>>();
  r.tce = j.at("tce").get<double>();
  r.cb = j.at("cb").get<double>();
  r.kappa_used = j.at("kappa_used").get<double>();
  if (r.levels.size() != r.empirical_coverage.size()) {
    throw std::invalid_argument("calibration report: levels and coverage differ in length");
  }
  return r;
}

std::string render_table(const CalibrationReport& r, const std::string& title) {
  std::ostringstream os;
  if (!title.empty()) os << title << '\n';
  os << std::fixed << std::setprecision(3);
  os << "  level  coverage    gap\n";
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    const double gap = r.levels[i] - r.empirical_coverage[i];
    os << "  " << std::setw(5) << r.levels[i] << "  " << std::setw(8) << r.empirical_coverage[i] << "  "
       << std::setw(6) << std::showpos << gap << std::noshowpos << '\n';
  }
  os << "  kappa " << std::setw(6) << r.kappa_used << "  TCE " << r.tce << "  CB " << std::showpos << r.cb
     << std::noshowpos << '\n';
  return os.str();
}

}  // namespace bt

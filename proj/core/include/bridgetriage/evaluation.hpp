#pragma once

// Held-out metrics for a trained surrogate set: regression error per head,
// calibration before and after kappa, and triage safety statistics.

#include <array>
#include <cstdint>
#include <span>

#include <nlohmann/json.hpp>

#include "bridgetriage/calibration.hpp"
#include "bridgetriage/inference.hpp"
#include "bridgetriage/triage.hpp"

namespace bt {

inline constexpr double kBandLo = 0.5;
inline constexpr double kBandHi = 1.5;

struct RegressionMetrics {
  std::size_t n = 0;
  double rmse = 0.0;
  double mape_pct = 0.0;  // mean |y - mu| / y, in percent
};

RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> mu);
// Restricted to rows whose true label lies in [lo, hi].
RegressionMetrics band_metrics(std::span<const double> y, std::span<const double> mu, double lo = kBandLo,
                               double hi = kBandHi);

// Per-head Monte Carlo moments for every row (same noise seed for each head).
std::array<PredictiveMoments, 3> predict_rows(const SurrogateSet& models, const Dataset& rows, std::size_t n_passes,
                                              std::uint64_t seed);

std::vector<double> labels(const Dataset& rows, Head head);
std::vector<PointPrediction> point_predictions(const PredictiveMoments& m);

struct HeadEvaluation {
  RegressionMetrics overall;
  RegressionMetrics band;
  CalibrationReport before;  // kappa = 1
  CalibrationReport after;   // the model's kappa
};

struct TriageStats {
  TriageSummary summary;
  std::size_t green_unsafe = 0;     // green rows whose true eta_min < 1
  double green_unsafe_fraction = 0.0;
  std::size_t critical = 0;         // rows whose true eta_min < 0.9
  std::size_t critical_red = 0;
  double red_recall = 0.0;
};

struct EvaluationReport {
  std::size_t n_rows = 0;
  std::size_t n_passes = 0;
  std::uint64_t seed = 0;
  std::array<HeadEvaluation, 3> heads;
  TriageStats triage;
};

EvaluationReport evaluate(const SurrogateSet& models, const Dataset& rows, std::size_t n_passes = 1000,
                          std::uint64_t seed = 0);

nlohmann::json to_json(const RegressionMetrics& m);
nlohmann::json to_json(const EvaluationReport& r);

}  // namespace bt

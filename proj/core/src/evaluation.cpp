#include "bridgetriage/evaluation.hpp"

#include <cmath>
#include <stdexcept>

namespace bt {

RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> mu) {
  if (y.size() != mu.size()) throw std::invalid_argument("regression_metrics: length mismatch");
  RegressionMetrics m;
  m.n = y.size();
  if (m.n == 0) return m;
  double se = 0.0;
  double ape = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - mu[i];
    se += r * r;
    ape += std::abs(r) / std::abs(y[i]);
  }
  m.rmse = std::sqrt(se / static_cast<double>(m.n));
  m.mape_pct = 100.0 * ape / static_cast<double>(m.n);
  return m;
}

RegressionMetrics band_metrics(std::span<const double> y, std::span<const double> mu, double lo, double hi) {
  if (y.size() != mu.size()) throw std::invalid_argument("band_metrics: length mismatch");
  std::vector<double> yb;
  std::vector<double> mb;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= lo && y[i] <= hi) {
      yb.push_back(y[i]);
      mb.push_back(mu[i]);
    }
  }
  return regression_metrics(yb, mb);
}

std::array<PredictiveMoments, 3> predict_rows(const SurrogateSet& models, const Dataset& rows, std::size_t n_passes,
                                              std::uint64_t seed) {
  std::vector<BridgeParams> params;
  params.reserve(rows.size());
  for (const auto& r : rows) params.push_back(r.x);
  const Eigen::MatrixXd x = feature_matrix(params);
  std::array<PredictiveMoments, 3> out;
  for (Head h : kHeads) out[head_index(h)] = predict_moments(models[h], x, n_passes, seed);
  return out;
}

std::vector<double> labels(const Dataset& rows, Head head) {
  std::vector<double> y;
  y.reserve(rows.size());
  for (const auto& r : rows) y.push_back(r.eta[head]);
  return y;
}

std::vector<PointPrediction> point_predictions(const PredictiveMoments& m) {
  std::vector<PointPrediction> p(static_cast<std::size_t>(m.mean.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = {m.mean[static_cast<Eigen::Index>(i)], m.stddev[static_cast<Eigen::Index>(i)]};
  }
  return p;
}

EvaluationReport evaluate(const SurrogateSet& models, const Dataset& rows, std::size_t n_passes, std::uint64_t seed) {
  if (rows.empty()) throw ValidationError("evaluation set is empty");
  EvaluationReport r;
  r.n_rows = rows.size();
  r.n_passes = n_passes;
  r.seed = seed;
  const auto moments = predict_rows(models, rows, n_passes, seed);
  const auto levels = default_levels();
  for (Head h : kHeads) {
    const auto& m = moments[head_index(h)];
    const auto y = labels(rows, h);
    const std::vector<double> mu(m.mean.data(), m.mean.data() + m.mean.size());
    const auto preds = point_predictions(m);
    auto& e = r.heads[head_index(h)];
    e.overall = regression_metrics(y, mu);
    e.band = band_metrics(y, mu);
    e.before = calibration_metrics(preds, y, levels, 1.0);
    e.after = calibration_metrics(preds, y, levels, models[h].kappa);
  }

  auto& t = r.triage;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    PredictiveDistribution d;
    for (Head h : kHeads) {
      const auto& m = moments[head_index(h)];
      const auto idx = static_cast<Eigen::Index>(i);
      const double kappa = models[h].kappa;
      d[h] = HeadPrediction{h, m.mean[idx], m.stddev[idx], kappa * m.stddev[idx], kappa, n_passes};
    }
    const TriageResult res = triage(d);
    const double eta_min = rows[i].eta.min();
    switch (res.klass) {
      case TriageClass::red: ++t.summary.n_red; break;
      case TriageClass::orange: ++t.summary.n_orange; break;
      case TriageClass::green: ++t.summary.n_green; break;
    }
    if (res.klass == TriageClass::green && eta_min < 1.0) ++t.green_unsafe;
    if (eta_min < 0.9) {
      ++t.critical;
      if (res.klass == TriageClass::red) ++t.critical_red;
    }
  }
  t.green_unsafe_fraction =
      t.summary.n_green ? static_cast<double>(t.green_unsafe) / static_cast<double>(t.summary.n_green) : 0.0;
  t.red_recall = t.critical ? static_cast<double>(t.critical_red) / static_cast<double>(t.critical) : 1.0;
  return r;
}

nlohmann::json to_json(const RegressionMetrics& m) {
  return {{"n", m.n}, {"rmse", m.rmse}, {"mape_pct", m.mape_pct}};
}

nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json heads = nlohmann::json::object();
  for (Head h : kHeads) {
    const auto& e = r.heads[head_index(h)];
    heads[std::string(head_name(h))] = {{"overall", to_json(e.overall)},
                                        {"band_0.5_1.5", to_json(e.band)},
                                        {"calibration_before", to_json(e.before)},
                                        {"calibration_after", to_json(e.after)}};
  }
  const auto& t = r.triage;
  return {{"n_rows", r.n_rows},
          {"n_passes", r.n_passes},
          {"seed", r.seed},
          {"heads", heads},
          {"triage",
           {{"summary", to_json(t.summary)},
            {"green_unsafe", t.green_unsafe},
            {"green_unsafe_fraction", t.green_unsafe_fraction},
            {"critical", t.critical},
            {"critical_red", t.critical_red},
            {"red_recall", t.red_recall}}}};
}

}  // namespace bt

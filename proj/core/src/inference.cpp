#include "bridgetriage/inference.hpp"

#include <cmath>

#include "bridgetriage/sampling.hpp"

namespace bt {

PredictiveDistribution predict_full(const SurrogateSet& models, const BridgeParams& p, std::size_t n_passes,
                                    std::uint64_t seed) {
  PredictiveDistribution d;
  for (Head h : kHeads) d[h] = predict(models[h], p, n_passes, seed);
  return d;
}

Query Query::from_features(const std::map<std::string, double>& features, const FeatureSchema& schema) {
  Query q;
  std::vector<std::string> problems;
  for (const auto& [name, value] : features) {
    const auto idx = schema.index_of(name);
    if (!idx) {
      problems.push_back(name + ": unknown feature");
      continue;
    }
    const auto& f = schema[*idx];
    if (!std::isfinite(value)) {
      problems.push_back(name + ": not-finite");
    } else if (value < f.lo || value > f.hi) {
      problems.push_back(name + ": " + std::string(value < f.lo ? "lo-undercut" : "hi-exceeded") + " (range [" +
                         std::to_string(f.lo) + ", " + std::to_string(f.hi) + "])");
    }
    q.known[*idx] = value;
  }
  if (!problems.empty()) throw ValidationError("invalid features", std::move(problems));
  return q;
}

Query Query::complete(const BridgeParams& p) {
  Query q;
  const auto v = p.to_array();
  for (std::size_t i = 0; i < kFeatureCount; ++i) q.known[i] = v[i];
  return q;
}

std::size_t Query::known_count() const {
  std::size_t n = 0;
  for (const auto& k : known) n += k.has_value() ? 1 : 0;
  return n;
}

std::vector<std::size_t> Query::missing_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!known[i]) out.push_back(i);
  }
  return out;
}

TotalVariance aggregate_total_variance(std::span<const double> mus, std::span<const double> sigmas) {
  if (mus.empty() || mus.size() != sigmas.size()) {
    throw std::invalid_argument("aggregate_total_variance: need equal, nonempty inputs");
  }
  const double n = static_cast<double>(mus.size());
  TotalVariance out;
  for (double m : mus) out.mu += m;
  out.mu /= n;
  double within = 0.0;
  double between = 0.0;
  for (std::size_t j = 0; j < mus.size(); ++j) {
    within += sigmas[j] * sigmas[j];
    between += (mus[j] - out.mu) * (mus[j] - out.mu);
  }
  within /= n;
  between /= n;
  // Centered form of mean(sigma^2 + mu^2) - mu^2; avoids cancellation.
  const double total = within + between;
  out.sigma = std::sqrt(total);
  out.diagnostics.within_variance = within;
  out.diagnostics.between_variance = between;
  out.diagnostics.between_share = total > 0.0 ? between / total : 0.0;
  return out;
}

ReducedPrediction predict_reduced(const SurrogateSet& models, const Query& q) {
  const auto& schema = FeatureSchema::canonical();
  if (q.known_count() == 0) throw ValidationError("at least one feature must be provided");
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!q.known[i]) continue;
    const double v = *q.known[i];
    if (!std::isfinite(v) || v < schema[i].lo || v > schema[i].hi) {
      throw ValidationError("known feature out of range", {schema[i].name});
    }
  }

  ReducedPrediction out;
  const auto missing = q.missing_indices();
  if (missing.empty()) {
    std::array<double, kFeatureCount> v{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) v[i] = *q.known[i];
    out.distribution = predict_full(models, BridgeParams::from_array(v), q.n_mc_passes, q.seed);
    out.completions = 1;
    out.passes_per_completion = q.n_mc_passes;
    return out;
  }
  if (q.n_marginal_samples < 2) throw ValidationError("n_marginal_samples must be at least 2");

  for (std::size_t i : missing) out.missing.push_back(schema[i].name);
  out.reduced = true;
  out.completions = q.n_marginal_samples;
  out.passes_per_completion = q.reduced_mc_passes;

  // Completed inputs: known values fixed, missing ones from an LHS over their sub-box.
  const Design design = lhs_sample(q.n_marginal_samples, missing.size(), q.seed);
  const auto n = static_cast<Eigen::Index>(q.n_marginal_samples);
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(kFeatureCount), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& point = design.points[static_cast<std::size_t>(c)];
    std::size_t m = 0;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      double v;
      if (q.known[i]) {
        v = *q.known[i];
      } else {
        const auto& f = schema[i];
        v = f.lo + point[m++] * (f.hi - f.lo);
      }
      raw(static_cast<Eigen::Index>(i), c) = v;
    }
  }

  for (Head h : kHeads) {
    const BnnModel& model = models[h];
    const auto moments = predict_moments(model, raw, q.reduced_mc_passes, q.seed);
    const auto agg = aggregate_total_variance(
        std::span<const double>(moments.mean.data(), static_cast<std::size_t>(n)),
        std::span<const double>(moments.stddev.data(), static_cast<std::size_t>(n)));
    HeadPrediction& p = out.distribution[h];
    p.head = h;
    p.mu = agg.mu;
    p.sigma = agg.sigma;
    p.kappa = model.kappa;
    p.sigma_scaled = model.kappa * agg.sigma;
    p.n_passes = q.reduced_mc_passes;
    out.diagnostics[head_index(h)] = agg.diagnostics;
  }
  return out;
}

nlohmann::json to_json(const PredictiveDistribution& d) {
  nlohmann::json j = nlohmann::json::object();
  for (Head h : kHeads) j[std::string(head_name(h))] = to_json(d[h]);
  return j;
}

nlohmann::json to_json(const MarginalDiagnostics& d) {
  return nlohmann::json{{"within_variance", d.within_variance},
                        {"between_variance", d.between_variance},
                        {"between_share", d.between_share}};
}

}  // namespace bt

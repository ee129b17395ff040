#pragma once

// Prediction entry points over the three per-head models, for complete
// inputs and for partial inputs whose missing features are marginalized
// over their schema ranges.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bridgetriage/bnn.hpp"
#include "bridgetriage/domain.hpp"

namespace bt {

struct SurrogateSet {
  std::array<BnnModel, 3> models;  // indexed by head_index

  const BnnModel& operator[](Head h) const { return models[head_index(h)]; }
  BnnModel& operator[](Head h) { return models[head_index(h)]; }
};

PredictiveDistribution predict_full(const SurrogateSet& models, const BridgeParams& p, std::size_t n_passes = 1000,
                                    std::uint64_t seed = 0);

struct Query {
  std::array<std::optional<double>, kFeatureCount> known;
  std::size_t n_marginal_samples = 256;
  std::size_t n_mc_passes = 1000;      // used when nothing is missing
  std::size_t reduced_mc_passes = 100;  // per completion when something is missing
  std::uint64_t seed = 0;

  // Rejects unknown names and out-of-range values with ValidationError.
  static Query from_features(const std::map<std::string, double>& features,
                             const FeatureSchema& schema = FeatureSchema::canonical());
  static Query complete(const BridgeParams& p);

  std::size_t known_count() const;
  std::vector<std::size_t> missing_indices() const;
};

struct MarginalDiagnostics {
  double within_variance = 0.0;   // mean of per-completion sigma^2
  double between_variance = 0.0;  // population variance of per-completion mu
  double between_share = 0.0;     // between / total (0 when total is 0)
};

struct ReducedPrediction {
  PredictiveDistribution distribution;
  std::array<MarginalDiagnostics, 3> diagnostics{};
  std::vector<std::string> missing;
  bool reduced = false;
  std::size_t completions = 0;
  std::size_t passes_per_completion = 0;
};

struct TotalVariance {
  double mu = 0.0;
  double sigma = 0.0;
  MarginalDiagnostics diagnostics;
};

// Law of total variance over completions j:
//   mu = mean mu_j,  sigma^2 = mean (sigma_j^2 + mu_j^2) - mu^2.
TotalVariance aggregate_total_variance(std::span<const double> mus, std::span<const double> sigmas);

// Falls back to predict_full when nothing is missing. Throws
// ValidationError when no feature is known.
ReducedPrediction predict_reduced(const SurrogateSet& models, const Query& q);

nlohmann::json to_json(const PredictiveDistribution& d);
nlohmann::json to_json(const MarginalDiagnostics& d);

}  // namespace bt

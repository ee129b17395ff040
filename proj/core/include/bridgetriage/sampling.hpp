#pragma once

// Training designs: Latin Hypercube coverage of the feature box and
// candidate-scored resampling that concentrates new points near the
// compliance boundary eta = 1.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bridgetriage/domain.hpp"

namespace bt {

enum class Strategy { lhs, adaptive };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

// Points in the unit cube, one row per point.
struct Design {
  std::size_t dim = 0;
  std::vector<std::vector<double>> points;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::lhs;
};

// Each dimension is cut into n equal strata and every stratum holds exactly
// one point. Throws std::invalid_argument for n == 0 or k == 0.
Design lhs_sample(std::size_t n, std::size_t k, std::uint64_t seed);

// Maps unit coordinates onto the schema box, c -> lo + c (hi - lo).
std::vector<BridgeParams> scale_to_schema(const Design& design, const FeatureSchema& schema);

// Gaussian-kernel density estimate at `query`.
double kde_density(std::span<const double> values, double query, double bandwidth);

// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> values);

struct AdaptiveOptions {
  double target = 1.0;
  double band = 0.25;
  std::size_t oversample = 10;
};

// Scores LHS candidates by exp(-(eta_min - target)^2 / (2 band^2)), where
// eta_min is the smallest label of the nearest existing row in
// standardized feature space, and keeps the n_new best (stable by index).
std::vector<BridgeParams> adaptive_resample(const Dataset& existing, std::size_t n_new, std::uint64_t seed,
                                            const AdaptiveOptions& options = {},
                                            const FeatureSchema& schema = FeatureSchema::canonical());

// Candidate scores in candidate order; exposed for diagnostics and tests.
std::vector<double> adaptive_scores(const Dataset& existing, std::span<const BridgeParams> candidates,
                                    const AdaptiveOptions& options);

// Full labeled design as used by the CLI. `lhs` draws n LHS points;
// `adaptive` draws ceil(n/2) LHS points, labels them, then adds the
// remaining points by adaptive_resample seeded from seed + 1.
Dataset generate_design(std::size_t n, Strategy strategy, std::uint64_t seed,
                        const FeatureSchema& schema = FeatureSchema::canonical());

}  // namespace bt

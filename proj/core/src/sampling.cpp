#include "bridgetriage/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "bridgetriage/rng.hpp"

namespace bt {

std::string_view strategy_name(Strategy s) { return s == Strategy::lhs ? "lhs" : "adaptive"; }

std::optional<Strategy> parse_strategy(std::string_view name) {
  if (name == "lhs") return Strategy::lhs;
  if (name == "adaptive") return Strategy::adaptive;
  return std::nullopt;
}

Design lhs_sample(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("lhs_sample: n must be at least 1");
  if (k == 0) throw std::invalid_argument("lhs_sample: k must be at least 1");

  Design design;
  design.dim = k;
  design.seed = seed;
  design.strategy = Strategy::lhs;
  design.points.assign(n, std::vector<double>(k));

  const double dn = static_cast<double>(n);
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < k; ++j) {
    Rng rng = make_rng(seed, j);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    for (std::size_t i = 0; i < n; ++i) {
      const double stratum = static_cast<double>(perm[i]);
      double c = (stratum + uniform01(rng)) / dn;
      // Rounding may push c onto the next stratum boundary; step back inside.
      while (c > 0.0 && std::floor(c * dn) > stratum) c = std::nextafter(c, 0.0);
      design.points[i][j] = c;
    }
  }
  return design;
}

std::vector<BridgeParams> scale_to_schema(const Design& design, const FeatureSchema& schema) {
  if (design.dim != schema.size() || schema.size() != kFeatureCount) {
    throw std::invalid_argument("scale_to_schema: design dimension " + std::to_string(design.dim) +
                                " does not match schema size " + std::to_string(schema.size()));
  }
  std::vector<BridgeParams> out;
  out.reserve(design.points.size());
  std::array<double, kFeatureCount> values{};
  for (const auto& point : design.points) {
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      const auto& f = schema[j];
      // Exact endpoints at c = 0 and c = 1.
      values[j] = point[j] >= 1.0 ? f.hi : f.lo + point[j] * (f.hi - f.lo);
    }
    out.push_back(BridgeParams::from_array(values));
  }
  return out;
}

double kde_density(std::span<const double> values, double query, double bandwidth) {
  if (values.empty()) throw std::invalid_argument("kde_density: values must be nonempty");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("kde_density: bandwidth must be positive");
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double sum = 0.0;
  for (double v : values) {
    const double u = (query - v) / bandwidth;
    sum += norm * std::exp(-0.5 * u * u);
  }
  return sum / (static_cast<double>(values.size()) * bandwidth);
}

double silverman_bandwidth(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("silverman_bandwidth: need at least 2 values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw std::invalid_argument("silverman_bandwidth: values have zero spread");
  return 0.9 * spread * std::pow(n, -0.2);
}

std::vector<double> adaptive_scores(const Dataset& existing, std::span<const BridgeParams> candidates,
                                    const AdaptiveOptions& options) {
  if (existing.empty()) throw std::invalid_argument("adaptive_resample: existing dataset is empty");

  // Standardize on the existing rows; zero-variance features are left unscaled.
  std::array<double, kFeatureCount> mean{}, scale{};
  const double n = static_cast<double>(existing.size());
  for (const auto& row : existing) {
    const auto x = row.x.to_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) mean[j] += x[j] / n;
  }
  for (const auto& row : existing) {
    const auto x = row.x.to_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) scale[j] += (x[j] - mean[j]) * (x[j] - mean[j]) / n;
  }
  for (auto& s : scale) s = s > 0.0 ? 1.0 / std::sqrt(s) : 1.0;

  std::vector<std::array<double, kFeatureCount>> pool(existing.size());
  std::vector<double> pool_eta(existing.size());
  for (std::size_t i = 0; i < existing.size(); ++i) {
    const auto x = existing[i].x.to_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) pool[i][j] = (x[j] - mean[j]) * scale[j];
    pool_eta[i] = existing[i].eta.min();
  }

  const double two_band_sq = 2.0 * options.band * options.band;
  std::vector<double> scores(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto raw = candidates[c].to_array();
    std::array<double, kFeatureCount> z{};
    for (std::size_t j = 0; j < kFeatureCount; ++j) z[j] = (raw[j] - mean[j]) * scale[j];

    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < kFeatureCount; ++j) {
        const double diff = z[j] - pool[i][j];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    const double dev = pool_eta[best] - options.target;
    scores[c] = std::isinf(two_band_sq) ? 1.0 : std::exp(-dev * dev / two_band_sq);
  }
  return scores;
}

std::vector<BridgeParams> adaptive_resample(const Dataset& existing, std::size_t n_new, std::uint64_t seed,
                                            const AdaptiveOptions& options, const FeatureSchema& schema) {
  if (existing.empty()) throw std::invalid_argument("adaptive_resample: existing dataset is empty");
  if (n_new == 0) throw std::invalid_argument("adaptive_resample: n_new must be at least 1");
  if (options.oversample == 0) throw std::invalid_argument("adaptive_resample: oversample must be at least 1");
  if (!(options.band > 0.0)) throw std::invalid_argument("adaptive_resample: band must be positive");

  const auto candidates = scale_to_schema(lhs_sample(n_new * options.oversample, schema.size(), seed), schema);
  const auto scores = adaptive_scores(existing, candidates, options);

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<BridgeParams> out;
  out.reserve(n_new);
  for (std::size_t i = 0; i < n_new; ++i) out.push_back(candidates[order[i]]);
  return out;
}

Dataset generate_design(std::size_t n, Strategy strategy, std::uint64_t seed, const FeatureSchema& schema) {
  if (strategy == Strategy::lhs) {
    return generate_dataset(schema, scale_to_schema(lhs_sample(n, schema.size(), seed), schema));
  }
  const std::size_t n_lhs = (n + 1) / 2;
  Dataset data = generate_dataset(schema, scale_to_schema(lhs_sample(n_lhs, schema.size(), seed), schema));
  if (n > n_lhs) {
    const auto extra = adaptive_resample(data, n - n_lhs, seed + 1, {}, schema);
    const auto labeled = generate_dataset(schema, extra);
    data.insert(data.end(), labeled.begin(), labeled.end());
  }
  return data;
}

}  // namespace bt

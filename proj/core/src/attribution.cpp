#include "bridgetriage/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include "bridgetriage/rng.hpp"

namespace bt {

double Attribution::efficiency_gap() const {
  const double total = std::accumulate(shap.begin(), shap.end(), base_value);
  return std::abs(total - prediction);
}

namespace {

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

struct Coalitions {
  std::vector<std::uint64_t> masks;
  std::vector<double> weights;
};

Coalitions enumerate_coalitions(std::size_t k) {
  Coalitions c;
  const std::uint64_t full = (std::uint64_t{1} << k) - 1;
  for (std::uint64_t mask = 1; mask < full; ++mask) {
    c.masks.push_back(mask);
    c.weights.push_back(shapley_kernel_weight(k, static_cast<std::size_t>(std::popcount(mask))));
  }
  return c;
}

// Draws `budget` coalitions; sizes follow the kernel's total mass per
// size, members are uniform within a size. Duplicates merge into weights.
Coalitions sample_coalitions(std::size_t k, std::size_t budget, std::uint64_t seed) {
  std::vector<double> size_mass(k, 0.0);
  for (std::size_t s = 1; s < k; ++s) {
    size_mass[s] = static_cast<double>(k - 1) / static_cast<double>(s * (k - s));
  }
  std::vector<double> cumulative(k, 0.0);
  std::partial_sum(size_mass.begin(), size_mass.end(), cumulative.begin());
  const double total = cumulative.back();

  Rng rng = make_rng(seed, 0x5ba9);
  std::map<std::uint64_t, double> counts;
  std::vector<std::size_t> idx(k);
  for (std::size_t draw = 0; draw < budget; ++draw) {
    const double u = uniform01(rng) * total;
    std::size_t s = 1;
    while (s + 1 < k && cumulative[s] <= u) ++s;
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::uint64_t mask = 0;
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, k - i));
      std::swap(idx[i], idx[j]);
      mask |= std::uint64_t{1} << idx[i];
    }
    counts[mask] += 1.0;
  }
  Coalitions c;
  for (const auto& [mask, count] : counts) {
    c.masks.push_back(mask);
    c.weights.push_back(count);
  }
  return c;
}

// Mean model output over the background with features in `mask` taken from x.
Eigen::VectorXd coalition_values(const BatchFunction& f, std::span<const double> x, const Eigen::MatrixXd& background,
                                 std::span<const std::uint64_t> masks) {
  const auto k = background.rows();
  const auto m = background.cols();
  constexpr std::size_t kMaxColumns = 1 << 17;
  const std::size_t per_chunk = std::max<std::size_t>(1, kMaxColumns / static_cast<std::size_t>(m));

  Eigen::VectorXd values(static_cast<Eigen::Index>(masks.size()));
  for (std::size_t start = 0; start < masks.size(); start += per_chunk) {
    const std::size_t len = std::min(per_chunk, masks.size() - start);
    Eigen::MatrixXd inputs(k, static_cast<Eigen::Index>(len) * m);
    for (std::size_t c = 0; c < len; ++c) {
      const std::uint64_t mask = masks[start + c];
      auto block = inputs.middleCols(static_cast<Eigen::Index>(c) * m, m);
      block = background;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (mask >> j & 1U) block.row(j).setConstant(x[static_cast<std::size_t>(j)]);
      }
    }
    const Eigen::VectorXd out = f(inputs);
    if (out.size() != inputs.cols()) throw std::invalid_argument("kernel_shap: model returned the wrong number of outputs");
    for (std::size_t c = 0; c < len; ++c) {
      values[static_cast<Eigen::Index>(start + c)] = out.segment(static_cast<Eigen::Index>(c) * m, m).mean();
    }
  }
  return values;
}

}  // namespace

double shapley_kernel_weight(std::size_t k, std::size_t s) {
  if (s == 0 || s >= k) throw std::invalid_argument("shapley_kernel_weight: need 0 < s < k");
  return static_cast<double>(k - 1) / (binomial(k, s) * static_cast<double>(s) * static_cast<double>(k - s));
}

Attribution kernel_shap(const BatchFunction& f, std::span<const double> x, const Eigen::MatrixXd& background,
                        const ShapOptions& options) {
  const std::size_t k = x.size();
  if (k == 0 || k > 62) throw std::invalid_argument("kernel_shap: feature count must be in [1, 62]");
  if (static_cast<std::size_t>(background.rows()) != k) {
    throw std::invalid_argument("kernel_shap: background rows must match the feature count");
  }
  if (background.cols() == 0) throw std::invalid_argument("kernel_shap: background must be nonempty");
  if (options.n_coalitions < 2 * k) {
    throw std::invalid_argument("kernel_shap: n_coalitions must be at least 2k = " + std::to_string(2 * k));
  }

  Attribution a;
  a.values.assign(x.begin(), x.end());
  a.background_size = static_cast<std::size_t>(background.cols());
  a.seed = options.seed;
  a.shap.assign(k, 0.0);

  const std::uint64_t full_mask = (std::uint64_t{1} << k) - 1;
  const std::uint64_t ends[] = {0, full_mask};
  const Eigen::VectorXd end_values = coalition_values(f, x, background, ends);
  a.base_value = end_values[0];
  a.prediction = end_values[1];
  const double delta = a.prediction - a.base_value;

  if (k == 1) {
    a.shap[0] = delta;
    a.coalition_samples = 2;
    return a;
  }

  const std::size_t budget = options.n_coalitions - 2;
  const double proper = std::ldexp(1.0, static_cast<int>(k)) - 2.0;
  const Coalitions coalitions =
      static_cast<double>(budget) >= proper ? enumerate_coalitions(k) : sample_coalitions(k, budget, options.seed);
  a.coalition_samples = coalitions.masks.size() + 2;

  const Eigen::VectorXd v = coalition_values(f, x, background, coalitions.masks);

  // Eliminate the last feature with the efficiency constraint:
  //   phi_k = delta - sum_{i<k} phi_i
  //   v(z) - v0 - z_k delta = sum_{i<k} (z_i - z_k) phi_i
  const auto rows = static_cast<Eigen::Index>(coalitions.masks.size());
  const auto cols = static_cast<Eigen::Index>(k - 1);
  Eigen::MatrixXd design(rows, cols);
  Eigen::VectorXd target(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::uint64_t mask = coalitions.masks[static_cast<std::size_t>(r)];
    const double sw = std::sqrt(coalitions.weights[static_cast<std::size_t>(r)]);
    const double zk = static_cast<double>(mask >> (k - 1) & 1U);
    for (Eigen::Index c = 0; c < cols; ++c) {
      design(r, c) = sw * (static_cast<double>(mask >> c & 1U) - zk);
    }
    target[r] = sw * (v[r] - a.base_value - zk * delta);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < cols) {
    throw ShapError("kernel_shap: regression is singular with " + std::to_string(rows) +
                    " distinct coalitions; increase n_coalitions");
  }
  const Eigen::VectorXd phi = qr.solve(target);
  double rest = 0.0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    a.shap[static_cast<std::size_t>(c)] = phi[c];
    rest += phi[c];
  }
  a.shap[k - 1] = delta - rest;
  return a;
}

BatchFunction mean_function(const BnnModel& m, std::size_t n_passes, std::uint64_t noise_seed) {
  return [&m, n_passes, noise_seed](const Eigen::MatrixXd& inputs) {
    return predict_moments(m, inputs, n_passes, noise_seed).mean;
  };
}

Attribution explain(const BnnModel& m, const BridgeParams& x, std::span<const BridgeParams> background,
                    const ExplainOptions& options) {
  const auto violations = validate_params(x, FeatureSchema::canonical());
  if (!violations.empty()) {
    std::vector<std::string> details;
    for (const auto& v : violations) details.push_back(v.describe());
    throw ValidationError("input outside the feature schema", std::move(details));
  }
  if (background.empty()) throw std::invalid_argument("explain: background set is empty");
  const auto point = x.to_array();
  Attribution a = kernel_shap(mean_function(m, options.mc_passes, options.seed), point, feature_matrix(background),
                              ShapOptions{options.n_coalitions, options.seed});
  a.head = std::string(head_name(m.head));
  a.feature_names = FeatureSchema::canonical().names();
  return a;
}

std::vector<double> mean_abs_shap(std::span<const Attribution> attributions) {
  if (attributions.empty()) throw std::invalid_argument("mean_abs_shap: no attributions");
  const std::size_t k = attributions.front().shap.size();
  std::vector<double> mean(k, 0.0);
  for (const auto& a : attributions) {
    if (a.shap.size() != k) throw std::invalid_argument("mean_abs_shap: attributions differ in feature count");
    for (std::size_t i = 0; i < k; ++i) mean[i] += std::abs(a.shap[i]);
  }
  for (auto& v : mean) v /= static_cast<double>(attributions.size());
  return mean;
}

std::vector<std::size_t> rank_features(std::span<const Attribution> attributions) {
  const auto importance = mean_abs_shap(attributions);
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  return order;
}

std::optional<std::size_t> next_feature_guidance(const std::vector<bool>& known, std::span<const std::size_t> ranking) {
  for (std::size_t idx : ranking) {
    if (idx >= known.size() || !known[idx]) return idx;
  }
  return std::nullopt;
}

nlohmann::json to_json(const Attribution& a) {
  auto features = nlohmann::json::array();
  for (std::size_t i = 0; i < a.shap.size(); ++i) {
    const std::string name = i < a.feature_names.size() ? a.feature_names[i] : "x" + std::to_string(i);
    features.push_back({{"name", name}, {"value", a.values[i]}, {"shap", a.shap[i]}});
  }
  return nlohmann::json{{"head", a.head},
                        {"base_value", a.base_value},
                        {"prediction", a.prediction},
                        {"features", features},
                        {"background_size", a.background_size},
                        {"coalition_samples", a.coalition_samples},
                        {"seed", a.seed}};
}

}  // namespace bt

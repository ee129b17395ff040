#pragma once

// Kernel SHAP attributions of a head's predictive mean, the importance
// ranking derived from them, and next-input guidance.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bridgetriage/bnn.hpp"

namespace bt {

// Evaluates a model on k x n input columns.
using BatchFunction = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

struct ShapOptions {
  std::size_t n_coalitions = 2048;
  std::uint64_t seed = 0;
};

struct Attribution {
  std::string head;
  std::vector<std::string> feature_names;
  std::vector<double> values;  // the explained point
  std::vector<double> shap;
  double base_value = 0.0;  // mean output over the background
  double prediction = 0.0;  // output at the explained point
  std::size_t background_size = 0;
  std::size_t coalition_samples = 0;  // evaluated coalitions, including empty and full
  std::uint64_t seed = 0;

  // |base + sum(shap) - prediction|
  double efficiency_gap() const;
};

class ShapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapley kernel weight (k - 1) / (C(k, s) s (k - s)) for 0 < s < k.
double shapley_kernel_weight(std::size_t k, std::size_t s);

// Interventional Kernel SHAP against `background` (k x m). All 2^k - 2
// proper coalitions are enumerated when the budget allows; otherwise
// coalitions are sampled by the kernel's size distribution. The empty
// and full coalitions enter as the efficiency constraint.
Attribution kernel_shap(const BatchFunction& f, std::span<const double> x, const Eigen::MatrixXd& background,
                        const ShapOptions& options = {});

// kappa-free predictive mean with a fixed noise seed, so repeated
// evaluations of the same input agree.
BatchFunction mean_function(const BnnModel& m, std::size_t n_passes = 200, std::uint64_t noise_seed = 0);

struct ExplainOptions {
  std::size_t n_coalitions = 2048;
  std::size_t mc_passes = 200;
  std::uint64_t seed = 0;
};

Attribution explain(const BnnModel& m, const BridgeParams& x, std::span<const BridgeParams> background,
                    const ExplainOptions& options = {});

// Feature indices by mean |shap| descending; stable on schema order.
std::vector<std::size_t> rank_features(std::span<const Attribution> attributions);

// Highest-ranked feature not yet known.
std::optional<std::size_t> next_feature_guidance(const std::vector<bool>& known, std::span<const std::size_t> ranking);

// Mean |shap| per feature over a probe set.
std::vector<double> mean_abs_shap(std::span<const Attribution> attributions);

nlohmann::json to_json(const Attribution& a);

}  // namespace bt

#pragma once

// Mean-field Bayesian multilayer perceptrons, one per compliance head.
//
// Every weight and bias has an independent Gaussian variational posterior
// N(mean, softplus(raw_scale)^2) and a N(0, prior_std^2) prior. Training
// minimizes
//
//   loss = lambda * KL(q || p) * (batch / n_train) + wMSLE(y, mu)
//
// with lambda = lambda0 / n_train, where mu is the average of T_train
// reparameterized forward passes. Gradients are derived by hand and
// verified against finite differences (see gradient_check).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bridgetriage/domain.hpp"

namespace bt {

struct Architecture {
  // Input, hidden..., output. Hidden layers use ReLU, the output softplus.
  std::vector<std::size_t> layer_sizes;

  static Architecture standard();  // 10 -> 64 -> 64 -> 1

  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t parameter_count() const;
  // Offset of layer l's weight block in the flat parameter layout; its
  // biases follow the out x in row-major weights.
  std::size_t layer_offset(std::size_t l) const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;

  // Throws ValidationError when a feature has zero variance.
  static Standardization fit(const Dataset& data);
  static Standardization identity(std::size_t k);

  // Raw feature columns (k x n) to standardized columns.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
};

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t train_mc_passes = 20;
  double lambda0 = 1.0;
  double wmsle_alpha = 4.0;
  double wmsle_beta = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
  // FNV-1a over the canonical JSON form.
  std::string fingerprint() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct BnnModel {
  Head head = Head::ms;
  Architecture architecture = Architecture::standard();
  std::vector<double> means;
  std::vector<double> raw_scales;
  double prior_std = 0.31622776601683794;  // sqrt(0.1)
  Standardization standardization;
  double kappa = 1.0;
  std::string train_config_fingerprint;

  std::size_t parameter_count() const { return means.size(); }
  void validate() const;
};

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

BnnModel init_model(Head head, std::uint64_t seed, const Architecture& arch = Architecture::standard());

// Realized weights mean + softplus(raw_scale) * noise.
std::vector<double> realize_weights(const BnnModel& m, std::span<const double> noise);

// Network output for standardized input columns (k x n) under fixed weights.
Eigen::RowVectorXd forward_weights(const Architecture& arch, std::span<const double> weights,
                                   const Eigen::MatrixXd& x_std);

double forward_sample(const BnnModel& m, std::span<const double> x_std, std::span<const double> noise);

double kl_divergence(const BnnModel& m);

double wmsle_weight(double y, double alpha, double beta);
double wmsle(std::span<const double> y, std::span<const double> mu, double alpha, double beta);

struct Batch {
  Eigen::MatrixXd x;  // standardized, one column per sample
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
};

Batch make_batch(const Dataset& data, Head head, const Standardization& standardization);

// One column of standard normal draws per Monte Carlo pass.
Eigen::MatrixXd draw_noise(std::size_t parameter_count, std::size_t passes, std::uint64_t seed,
                           std::uint64_t stream);

struct LossTerms {
  double total = 0.0;
  double kl = 0.0;       // unweighted KL(q || p)
  double kl_term = 0.0;  // lambda * KL * batch fraction
  double data_term = 0.0;
};

LossTerms loss(const BnnModel& m, const Batch& batch, const TrainConfig& cfg, std::size_t n_train,
               const Eigen::MatrixXd& noise);

struct LossGradient {
  LossTerms value;
  std::vector<double> d_means;
  std::vector<double> d_raw_scales;
};

LossGradient loss_gradient(const BnnModel& m, const Batch& batch, const TrainConfig& cfg, std::size_t n_train,
                           const Eigen::MatrixXd& noise);

// Closed-form gradient of the unweighted KL term.
LossGradient kl_gradient(const BnnModel& m);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;  // index into [means..., raw_scales...]
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences over every variational parameter under frozen noise.
// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradientCheck gradient_check(const BnnModel& m, const Batch& batch, const TrainConfig& cfg, std::size_t n_train,
                             const Eigen::MatrixXd& noise, double step = 1e-5);

struct TrainResult {
  BnnModel model;
  double initial_loss = 0.0;         // mean minibatch loss before the first update
  std::vector<double> epoch_losses;  // mean minibatch loss per epoch
};

// Fits standardization on `data`, then runs Adam over shuffled minibatches.
// Labels of `head` must be strictly positive.
TrainResult train(const Dataset& data, Head head, const TrainConfig& cfg,
                  const Architecture& arch = Architecture::standard());

struct HeadPrediction {
  Head head = Head::ms;
  double mu = 0.0;
  double sigma = 0.0;         // epistemic, unscaled
  double sigma_scaled = 0.0;  // kappa * sigma
  double kappa = 1.0;
  std::size_t n_passes = 0;
};

struct PredictiveDistribution {
  std::array<HeadPrediction, 3> heads;

  const HeadPrediction& operator[](Head h) const { return heads[head_index(h)]; }
  HeadPrediction& operator[](Head h) { return heads[head_index(h)]; }
};

struct PredictiveMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // unbiased, divisor n - 1
};

// Monte Carlo moments for raw (unstandardized) feature columns. Pass i
// draws its noise from substream i of `seed`, shared by every column.
PredictiveMoments predict_moments(const BnnModel& m, const Eigen::MatrixXd& raw_features, std::size_t n_passes,
                                  std::uint64_t seed);

// Validates x against the canonical schema; n_passes >= 2.
HeadPrediction predict(const BnnModel& m, const BridgeParams& x, std::size_t n_passes = 1000,
                       std::uint64_t seed = 0);

Eigen::MatrixXd feature_matrix(std::span<const BridgeParams> rows);

// Model file (versioned JSON).
inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const BnnModel& m, const FeatureSchema& schema = FeatureSchema::canonical());
BnnModel model_from_json(const nlohmann::json& j, const FeatureSchema& schema = FeatureSchema::canonical());
void save_model(const BnnModel& m, const std::filesystem::path& path);
BnnModel load_model(const std::filesystem::path& path);

nlohmann::json to_json(const HeadPrediction& p);

}  // namespace bt

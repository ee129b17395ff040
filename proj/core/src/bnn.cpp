#include "bridgetriage/bnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bridgetriage/hash.hpp"
#include "bridgetriage/rng.hpp"

namespace bt {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// ---------------------------------------------------------------------------
// Architecture, standardization, configuration

Architecture Architecture::standard() { return Architecture{{kFeatureCount, 64, 64, 1}}; }

std::size_t Architecture::parameter_count() const { return layer_offset(layer_count()); }

std::size_t Architecture::layer_offset(std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) off += layer_sizes[i + 1] * (layer_sizes[i] + 1);
  return off;
}

void Architecture::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("architecture needs at least input and output layers");
  if (layer_sizes.back() != 1) throw std::invalid_argument("architecture must end in a single output");
  for (auto s : layer_sizes) {
    if (s == 0) throw std::invalid_argument("architecture layer sizes must be positive");
  }
}

Standardization Standardization::fit(const Dataset& data) {
  if (data.empty()) throw ValidationError("cannot fit standardization on an empty dataset");
  Standardization st;
  st.mean.assign(kFeatureCount, 0.0);
  st.stddev.assign(kFeatureCount, 0.0);
  const double n = static_cast<double>(data.size());
  for (const auto& row : data) {
    const auto x = row.x.to_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) st.mean[j] += x[j];
  }
  for (auto& v : st.mean) v /= n;
  for (const auto& row : data) {
    const auto x = row.x.to_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) st.stddev[j] += (x[j] - st.mean[j]) * (x[j] - st.mean[j]);
  }
  const auto names = FeatureSchema::canonical().names();
  std::vector<std::string> degenerate;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    st.stddev[j] = std::sqrt(st.stddev[j] / n);
    if (!(st.stddev[j] > 0.0)) degenerate.push_back(names[j]);
  }
  if (!degenerate.empty()) throw ValidationError("features with zero variance in training data", degenerate);
  return st;
}

Standardization Standardization::identity(std::size_t k) {
  return Standardization{std::vector<double>(k, 0.0), std::vector<double>(k, 1.0)};
}

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& raw) const {
  if (static_cast<std::size_t>(raw.rows()) != mean.size()) {
    throw std::invalid_argument("standardization: expected " + std::to_string(mean.size()) + " feature rows");
  }
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.rows(); ++j) {
    out.row(j) = (raw.row(j).array() - mean[j]) / stddev[j];
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || train_mc_passes == 0) {
    throw ValidationError("train config: epochs, batch_size and train_mc_passes must be at least 1");
  }
  if (!(learning_rate > 0.0) || !(lambda0 > 0.0) || !(wmsle_alpha > 0.0) || !(wmsle_beta > 0.0)) {
    throw ValidationError("train config: learning_rate, lambda0, wmsle_alpha and wmsle_beta must be positive");
  }
}

std::string TrainConfig::fingerprint() const { return fnv1a64_hex(to_json(*this).dump()); }

nlohmann::json to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"epochs", cfg.epochs},
                        {"batch_size", cfg.batch_size},
                        {"learning_rate", cfg.learning_rate},
                        {"train_mc_passes", cfg.train_mc_passes},
                        {"lambda0", cfg.lambda0},
                        {"wmsle_alpha", cfg.wmsle_alpha},
                        {"wmsle_beta", cfg.wmsle_beta},
                        {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") {
        cfg.epochs = value.get<std::size_t>();
      } else if (key == "batch_size") {
        cfg.batch_size = value.get<std::size_t>();
      } else if (key == "learning_rate") {
        cfg.learning_rate = value.get<double>();
      } else if (key == "train_mc_passes") {
        cfg.train_mc_passes = value.get<std::size_t>();
      } else if (key == "lambda0") {
        cfg.lambda0 = value.get<double>();
      } else if (key == "wmsle_alpha") {
        cfg.wmsle_alpha = value.get<double>();
      } else if (key == "wmsle_beta") {
        cfg.wmsle_beta = value.get<double>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else {
        throw ValidationError("train config: unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("train config: key '" + key + "' has the wrong type");
    }
  }
  cfg.validate();
  return cfg;
}

void BnnModel::validate() const {
  architecture.validate();
  const std::size_t p = architecture.parameter_count();
  if (means.size() != p || raw_scales.size() != p) {
    throw std::invalid_argument("model parameter count does not match architecture");
  }
  if (standardization.mean.size() != architecture.input_size() ||
      standardization.stddev.size() != architecture.input_size()) {
    throw std::invalid_argument("model standardization does not match input size");
  }
  for (double s : standardization.stddev) {
    if (!(s > 0.0)) throw std::invalid_argument("model standardization stddev must be positive");
  }
  if (!(prior_std > 0.0)) throw std::invalid_argument("prior_std must be positive");
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
}

// ---------------------------------------------------------------------------
// Elementwise helpers

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("inverse_softplus: argument must be positive");
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

template <typename Derived>
Eigen::RowVectorXd softplus_row(const Eigen::MatrixBase<Derived>& z) {
  Eigen::RowVectorXd out(z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) out[i] = softplus(z(0, i));
  return out;
}

void check_noise(const BnnModel& m, std::span<const double> noise) {
  if (noise.size() != m.parameter_count()) {
    throw std::invalid_argument("noise has " + std::to_string(noise.size()) + " entries, model has " +
                                std::to_string(m.parameter_count()) + " parameters");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Model construction and evaluation

BnnModel init_model(Head head, std::uint64_t seed, const Architecture& arch) {
  arch.validate();
  BnnModel m;
  m.head = head;
  m.architecture = arch;
  const std::size_t p = arch.parameter_count();
  m.means.resize(p);
  Rng rng = make_rng(seed, 1);
  fill_standard_normal(rng, m.means);
  for (auto& v : m.means) v *= 0.05;
  m.raw_scales.assign(p, inverse_softplus(0.05));
  m.standardization = Standardization::identity(arch.input_size());
  return m;
}

std::vector<double> realize_weights(const BnnModel& m, std::span<const double> noise) {
  check_noise(m, noise);
  std::vector<double> w(m.means.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = m.means[i] + softplus(m.raw_scales[i]) * noise[i];
  return w;
}

Eigen::RowVectorXd forward_weights(const Architecture& arch, std::span<const double> weights,
                                   const Eigen::MatrixXd& x_std) {
  if (weights.size() != arch.parameter_count()) throw std::invalid_argument("weight vector size mismatch");
  if (static_cast<std::size_t>(x_std.rows()) != arch.input_size()) {
    throw std::invalid_argument("input has " + std::to_string(x_std.rows()) + " features, expected " +
                                std::to_string(arch.input_size()));
  }
  Eigen::MatrixXd a = x_std;
  const std::size_t layers = arch.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(arch.layer_sizes[l]);
    const auto out = static_cast<Eigen::Index>(arch.layer_sizes[l + 1]);
    const double* base = weights.data() + arch.layer_offset(l);
    RowMajorMap w(base, out, in);
    Eigen::Map<const Eigen::VectorXd> b(base + out * in, out);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    if (l + 1 < layers) {
      a = z.cwiseMax(0.0);
    } else {
      return softplus_row(z);
    }
  }
  return {};
}

double forward_sample(const BnnModel& m, std::span<const double> x_std, std::span<const double> noise) {
  if (x_std.size() != m.architecture.input_size()) {
    throw std::invalid_argument("forward_sample: input has " + std::to_string(x_std.size()) + " entries, expected " +
                                std::to_string(m.architecture.input_size()));
  }
  const auto w = realize_weights(m, noise);
  Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(x_std.data(), static_cast<Eigen::Index>(x_std.size()));
  return forward_weights(m.architecture, w, x)[0];
}

double kl_divergence(const BnnModel& m) {
  const double sp = m.prior_std;
  const double inv_two_var = 1.0 / (2.0 * sp * sp);
  double kl = 0.0;
  for (std::size_t i = 0; i < m.means.size(); ++i) {
    const double s = softplus(m.raw_scales[i]);
    kl += std::log(sp / s) + (s * s + m.means[i] * m.means[i]) * inv_two_var - 0.5;
  }
  return kl;
}

double wmsle_weight(double y, double alpha, double beta) {
  const double d = y - 1.0;
  return 1.0 + alpha * std::exp(-d * d / (2.0 * beta * beta));
}

double wmsle(std::span<const double> y, std::span<const double> mu, double alpha, double beta) {
  if (y.size() != mu.size()) throw std::invalid_argument("wmsle: length mismatch");
  if (y.empty()) throw std::invalid_argument("wmsle: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0) || !(mu[i] > 0.0)) throw std::invalid_argument("wmsle: inputs must be positive");
    const double r = std::log1p(y[i]) - std::log1p(mu[i]);
    sum += wmsle_weight(y[i], alpha, beta) * r * r;
  }
  return sum / static_cast<double>(y.size());
}

Batch make_batch(const Dataset& data, Head head, const Standardization& standardization) {
  Batch b;
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(kFeatureCount), static_cast<Eigen::Index>(data.size()));
  b.y.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data[i].x.to_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      raw(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = x[j];
    }
    b.y[i] = data[i].eta[head];
  }
  b.x = standardization.apply(raw);
  return b;
}

Eigen::MatrixXd draw_noise(std::size_t parameter_count, std::size_t passes, std::uint64_t seed,
                           std::uint64_t stream) {
  Eigen::MatrixXd noise(static_cast<Eigen::Index>(parameter_count), static_cast<Eigen::Index>(passes));
  Rng rng = make_rng(seed, stream);
  fill_standard_normal(rng, std::span<double>(noise.data(), static_cast<std::size_t>(noise.size())));
  return noise;
}

// ---------------------------------------------------------------------------
// Loss and gradients

namespace {

struct PassTrace {
  std::vector<double> weights;
  std::vector<Eigen::MatrixXd> hidden;  // post-ReLU activations per hidden layer
  Eigen::RowVectorXd output_pre;        // output pre-activation
};

void check_loss_inputs(const BnnModel& m, const Batch& batch, std::size_t n_train, const Eigen::MatrixXd& noise) {
  if (batch.size() == 0) throw std::invalid_argument("loss: batch is empty");
  if (n_train == 0) throw std::invalid_argument("loss: n_train must be positive");
  if (noise.cols() == 0) throw std::invalid_argument("loss: need at least one Monte Carlo pass");
  if (static_cast<std::size_t>(noise.rows()) != m.parameter_count()) {
    throw std::invalid_argument("loss: noise rows do not match the parameter count");
  }
  if (static_cast<std::size_t>(batch.x.cols()) != batch.size()) {
    throw std::invalid_argument("loss: batch inputs and labels differ in length");
  }
}

PassTrace trace_pass(const BnnModel& m, const Batch& batch, const double* noise) {
  const auto& arch = m.architecture;
  PassTrace t;
  t.weights = realize_weights(m, std::span<const double>(noise, m.parameter_count()));
  const std::size_t layers = arch.layer_count();
  const Eigen::MatrixXd* a = &batch.x;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(arch.layer_sizes[l]);
    const auto out = static_cast<Eigen::Index>(arch.layer_sizes[l + 1]);
    const double* base = t.weights.data() + arch.layer_offset(l);
    RowMajorMap w(base, out, in);
    Eigen::Map<const Eigen::VectorXd> b(base + out * in, out);
    Eigen::MatrixXd z = w * (*a);
    z.colwise() += b;
    if (l + 1 < layers) {
      t.hidden.push_back(z.cwiseMax(0.0));
      a = &t.hidden.back();
    } else {
      t.output_pre = z.row(0);
    }
  }
  return t;
}

double kl_weight(const TrainConfig& cfg, std::size_t batch_size, std::size_t n_train) {
  const double n = static_cast<double>(n_train);
  return (cfg.lambda0 / n) * (static_cast<double>(batch_size) / n);
}

}  // namespace

LossTerms loss(const BnnModel& m, const Batch& batch, const TrainConfig& cfg, std::size_t n_train,
               const Eigen::MatrixXd& noise) {
  check_loss_inputs(m, batch, n_train, noise);
  const auto passes = noise.cols();
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(batch.size()));
  for (Eigen::Index t = 0; t < passes; ++t) {
    const auto w = realize_weights(m, std::span<const double>(noise.col(t).data(), m.parameter_count()));
    mu += forward_weights(m.architecture, w, batch.x);
  }
  mu /= static_cast<double>(passes);

  LossTerms terms;
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double r = std::log1p(batch.y[i]) - std::log1p(mu[static_cast<Eigen::Index>(i)]);
    sum += wmsle_weight(batch.y[i], cfg.wmsle_alpha, cfg.wmsle_beta) * r * r;
  }
  terms.data_term = sum / static_cast<double>(batch.size());
  terms.kl = kl_divergence(m);
  terms.kl_term = kl_weight(cfg, batch.size(), n_train) * terms.kl;
  terms.total = terms.kl_term + terms.data_term;
  return terms;
}

LossGradient kl_gradient(const BnnModel& m) {
  LossGradient g;
  const std::size_t p = m.parameter_count();
  g.d_means.resize(p);
  g.d_raw_scales.resize(p);
  const double inv_var = 1.0 / (m.prior_std * m.prior_std);
  for (std::size_t i = 0; i < p; ++i) {
    const double s = softplus(m.raw_scales[i]);
    g.d_means[i] = m.means[i] * inv_var;
    g.d_raw_scales[i] = (-1.0 / s + s * inv_var) * sigmoid(m.raw_scales[i]);
  }
  g.value.kl = kl_divergence(m);
  g.value.kl_term = g.value.kl;
  g.value.total = g.value.kl;
  return g;
}

LossGradient loss_gradient(const BnnModel& m, const Batch& batch, const TrainConfig& cfg, std::size_t n_train,
                           const Eigen::MatrixXd& noise) {
  check_loss_inputs(m, batch, n_train, noise);
  const auto& arch = m.architecture;
  const std::size_t p = m.parameter_count();
  const auto passes = noise.cols();
  const auto n = static_cast<Eigen::Index>(batch.size());

  std::vector<PassTrace> traces;
  traces.reserve(static_cast<std::size_t>(passes));
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(n);
  for (Eigen::Index t = 0; t < passes; ++t) {
    traces.push_back(trace_pass(m, batch, noise.col(t).data()));
    mu += softplus_row(traces.back().output_pre);
  }
  mu /= static_cast<double>(passes);

  LossGradient g;
  Eigen::RowVectorXd d_mu(n);
  double sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = batch.y[static_cast<std::size_t>(i)];
    const double w = wmsle_weight(y, cfg.wmsle_alpha, cfg.wmsle_beta);
    const double r = std::log1p(mu[i]) - std::log1p(y);
    sum += w * r * r;
    d_mu[i] = inv_n * w * 2.0 * r / (1.0 + mu[i]);
  }
  g.value.data_term = sum * inv_n;

  g.d_means.assign(p, 0.0);
  g.d_raw_scales.assign(p, 0.0);
  std::vector<double> grad_w(p);
  std::vector<double> scale_slope(p);
  for (std::size_t i = 0; i < p; ++i) scale_slope[i] = sigmoid(m.raw_scales[i]);

  const std::size_t layers = arch.layer_count();
  for (Eigen::Index t = 0; t < passes; ++t) {
    const PassTrace& tr = traces[static_cast<std::size_t>(t)];
    // d loss / d output pre-activation, shape 1 x n.
    Eigen::MatrixXd delta(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      delta(0, i) = d_mu[i] / static_cast<double>(passes) * sigmoid(tr.output_pre[i]);
    }
    for (std::size_t l = layers; l-- > 0;) {
      const auto in = static_cast<Eigen::Index>(arch.layer_sizes[l]);
      const auto out = static_cast<Eigen::Index>(arch.layer_sizes[l + 1]);
      const std::size_t off = arch.layer_offset(l);
      const Eigen::MatrixXd& a_prev = l == 0 ? batch.x : tr.hidden[l - 1];
      RowMajorMutMap gw(grad_w.data() + off, out, in);
      gw.noalias() = delta * a_prev.transpose();
      Eigen::Map<Eigen::VectorXd> gb(grad_w.data() + off + static_cast<std::size_t>(out * in), out);
      gb = delta.rowwise().sum();
      if (l > 0) {
        RowMajorMap w(tr.weights.data() + off, out, in);
        Eigen::MatrixXd back = w.transpose() * delta;
        delta = (a_prev.array() > 0.0).select(back, 0.0);
      }
    }
    const double* eps = noise.col(t).data();
    for (std::size_t i = 0; i < p; ++i) {
      g.d_means[i] += grad_w[i];
      g.d_raw_scales[i] += grad_w[i] * eps[i] * scale_slope[i];
    }
  }

  const double coef = kl_weight(cfg, batch.size(), n_train);
  const LossGradient klg = kl_gradient(m);
  for (std::size_t i = 0; i < p; ++i) {
    g.d_means[i] += coef * klg.d_means[i];
    g.d_raw_scales[i] += coef * klg.d_raw_scales[i];
  }
  g.value.kl = klg.value.kl;
  g.value.kl_term = coef * klg.value.kl;
  g.value.total = g.value.kl_term + g.value.data_term;
  return g;
}

GradientCheck gradient_check(const BnnModel& m, const Batch& batch, const TrainConfig& cfg, std::size_t n_train,
                             const Eigen::MatrixXd& noise, double step) {
  const LossGradient analytic = loss_gradient(m, batch, cfg, n_train, noise);
  const std::size_t p = m.parameter_count();
  GradientCheck result;
  BnnModel probe = m;
  for (std::size_t k = 0; k < 2 * p; ++k) {
    double& param = k < p ? probe.means[k] : probe.raw_scales[k - p];
    const double saved = param;
    param = saved + step;
    const double up = loss(probe, batch, cfg, n_train, noise).total;
    param = saved - step;
    const double down = loss(probe, batch, cfg, n_train, noise).total;
    param = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = k < p ? analytic.d_means[k] : analytic.d_raw_scales[k - p];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    if (k == 0 || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = k;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m1;
  std::vector<double> m2;
  std::size_t t = 0;

  Adam(std::size_t n, double learning_rate) : lr(learning_rate), m1(n, 0.0), m2(n, 0.0) {}

  void step(std::vector<double>& params, std::span<const double> grad, std::size_t offset) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t k = offset + i;
      m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[i];
      m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m1[k] / (1.0 - std::pow(beta1, static_cast<double>(t)));
      const double vhat = m2[k] / (1.0 - std::pow(beta2, static_cast<double>(t)));
      params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

Batch gather(const Batch& full, std::span<const std::size_t> idx) {
  Batch b;
  b.x.resize(full.x.rows(), static_cast<Eigen::Index>(idx.size()));
  b.y.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    b.x.col(static_cast<Eigen::Index>(i)) = full.x.col(static_cast<Eigen::Index>(idx[i]));
    b.y[i] = full.y[idx[i]];
  }
  return b;
}

constexpr std::uint64_t kInitialLossStream = 3;
constexpr std::uint64_t kStepNoiseStreamBase = 1000;

}  // namespace

TrainResult train(const Dataset& data, Head head, const TrainConfig& cfg, const Architecture& arch) {
  cfg.validate();
  if (data.empty()) throw ValidationError("training data is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!(data[i].eta[head] > 0.0)) {
      throw ValidationError("label " + std::string(head_name(head)) + " of row " + std::to_string(i) +
                            " is not strictly positive");
    }
  }

  TrainResult result;
  BnnModel& m = result.model;
  m = init_model(head, cfg.seed, arch);
  m.standardization = Standardization::fit(data);
  m.train_config_fingerprint = cfg.fingerprint();

  const Batch full = make_batch(data, head, m.standardization);
  const std::size_t n = data.size();
  const std::size_t p = m.parameter_count();
  const std::size_t bs = std::min(cfg.batch_size, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_rng(cfg.seed, 2);
  Adam adam(2 * p, cfg.learning_rate);

  // Scaled like a minibatch loss so it is comparable with epoch_losses.
  const LossTerms t0 = loss(m, full, cfg, n, draw_noise(p, cfg.train_mc_passes, cfg.seed, kInitialLossStream));
  result.initial_loss = t0.data_term + t0.kl_term * static_cast<double>(bs) / static_cast<double>(n);

  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(start + bs, n);
      const Batch batch = gather(full, std::span<const std::size_t>(order.data() + start, end - start));
      const Eigen::MatrixXd noise = draw_noise(p, cfg.train_mc_passes, cfg.seed, kStepNoiseStreamBase + step);
      const LossGradient g = loss_gradient(m, batch, cfg, n, noise);
      ++step;
      adam.t = step;
      adam.step(m.means, g.d_means, 0);
      adam.step(m.raw_scales, g.d_raw_scales, p);
      epoch_loss += g.value.total;
      ++batches;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prediction

Eigen::MatrixXd feature_matrix(std::span<const BridgeParams> rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(kFeatureCount), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = rows[i].to_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v[j];
  }
  return x;
}

PredictiveMoments predict_moments(const BnnModel& m, const Eigen::MatrixXd& raw_features, std::size_t n_passes,
                                  std::uint64_t seed) {
  if (n_passes < 2) throw std::invalid_argument("predict: n_passes must be at least 2");
  const Eigen::MatrixXd x = m.standardization.apply(raw_features);
  const Eigen::Index n = x.cols();
  constexpr Eigen::Index kChunk = 8192;

  PredictiveMoments out;
  out.mean = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(n);
  const std::size_t p = m.parameter_count();
  std::vector<double> scales(p);
  for (std::size_t i = 0; i < p; ++i) scales[i] = softplus(m.raw_scales[i]);
  std::vector<double> noise(p);
  std::vector<double> w(p);
  for (std::size_t pass = 0; pass < n_passes; ++pass) {
    Rng rng = make_rng(seed, pass);
    fill_standard_normal(rng, noise);
    for (std::size_t i = 0; i < p; ++i) w[i] = m.means[i] + scales[i] * noise[i];
    const double count = static_cast<double>(pass + 1);
    for (Eigen::Index start = 0; start < n; start += kChunk) {
      const Eigen::Index len = std::min(kChunk, n - start);
      const Eigen::RowVectorXd y = forward_weights(m.architecture, w, x.middleCols(start, len));
      for (Eigen::Index i = 0; i < len; ++i) {
        const Eigen::Index k = start + i;
        const double delta = y[i] - out.mean[k];
        out.mean[k] += delta / count;
        m2[k] += delta * (y[i] - out.mean[k]);
      }
    }
  }
  out.stddev = (m2 / static_cast<double>(n_passes - 1)).cwiseSqrt();
  return out;
}

HeadPrediction predict(const BnnModel& m, const BridgeParams& x, std::size_t n_passes, std::uint64_t seed) {
  const auto violations = validate_params(x, FeatureSchema::canonical());
  if (!violations.empty()) {
    std::vector<std::string> details;
    for (const auto& v : violations) details.push_back(v.describe());
    throw ValidationError("input outside the feature schema", std::move(details));
  }
  const BridgeParams rows[] = {x};
  const auto moments = predict_moments(m, feature_matrix(rows), n_passes, seed);
  HeadPrediction p;
  p.head = m.head;
  p.mu = moments.mean[0];
  p.sigma = moments.stddev[0];
  p.kappa = m.kappa;
  p.sigma_scaled = m.kappa * p.sigma;
  p.n_passes = n_passes;
  return p;
}

}  // namespace bt

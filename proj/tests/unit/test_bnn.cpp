#include <gtest/gtest.h>

#include <cmath>

#include "bridgetriage/bnn.hpp"
#include "support.hpp"

namespace bt {
namespace {

const Architecture kMini{{10, 4, 1}};

// Direct loop evaluation of a 10 -> 4 -> 1 network, independent of the
// Eigen path: ReLU hidden layer, softplus output.
// Layout: W0 (4 x 10, row-major) at 0, b0 at 40, W1 (1 x 4) at 44, b1 at 48.
double mini_forward(const std::vector<double>& w, const std::vector<double>& x) {
  double out = w[48];
  for (int j = 0; j < 4; ++j) {
    double a = w[40 + j];
    for (int i = 0; i < 10; ++i) a += w[j * 10 + i] * x[i];
    out += w[44 + j] * std::max(a, 0.0);
  }
  return std::log1p(std::exp(out));
}

TEST(Architecture, ParameterLayout) {
  EXPECT_EQ(kMini.parameter_count(), 49u);
  EXPECT_EQ(kMini.layer_offset(0), 0u);
  EXPECT_EQ(kMini.layer_offset(1), 44u);
  EXPECT_EQ(Architecture::standard().parameter_count(), 10u * 64 + 64 + 64 * 64 + 64 + 64 + 1);
}

TEST(Init, DeterministicWithInitialScale) {
  const auto a = init_model(Head::v, 5);
  const auto b = init_model(Head::v, 5);
  EXPECT_EQ(a.means, b.means);
  for (double r : a.raw_scales) EXPECT_NEAR(softplus(r), 0.05, 1e-15);
  EXPECT_EQ(a.kappa, 1.0);
  EXPECT_NE(a.means, init_model(Head::v, 6).means);
  double s2 = 0;
  for (double m : a.means) s2 += m * m;
  EXPECT_NEAR(std::sqrt(s2 / static_cast<double>(a.means.size())), 0.05, 0.005);
  EXPECT_GT(kl_divergence(a), 0.0);
}

TEST(Forward, ZeroNoiseEvaluatesMeans) {
  const auto m = init_model(Head::ms, 1, kMini);
  test::Gen g(1);
  std::vector<double> x(10);
  for (auto& v : x) v = g.normal();
  const std::vector<double> zero(m.parameter_count(), 0.0);
  EXPECT_NEAR(forward_sample(m, x, zero), mini_forward(m.means, x), 1e-14);
}

TEST(Forward, NoisyWeightsMatchLoopOracle) {
  auto m = init_model(Head::ms, 2, kMini);
  test::Gen g(2);
  for (auto& r : m.raw_scales) r = g.uniform(-3, 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(10), eps(m.parameter_count());
    for (auto& v : x) v = g.normal();
    for (auto& v : eps) v = g.normal();
    const auto w = realize_weights(m, eps);
    for (std::size_t i = 0; i < w.size(); ++i) {
      EXPECT_DOUBLE_EQ(w[i], m.means[i] + std::log1p(std::exp(m.raw_scales[i])) * eps[i]);
    }
    const double y = forward_sample(m, x, eps);
    EXPECT_NEAR(y, mini_forward(w, x), 1e-13);
    EXPECT_GT(y, 0.0);
  }
}

TEST(Forward, DifferentNoiseDifferentOutput) {
  const auto m = init_model(Head::mc, 3);
  std::vector<double> x(10, 0.3);
  const auto a = draw_noise(m.parameter_count(), 2, 9, 0);
  const double y0 = forward_sample(m, x, std::span<const double>(a.col(0).data(), m.parameter_count()));
  const double y1 = forward_sample(m, x, std::span<const double>(a.col(1).data(), m.parameter_count()));
  EXPECT_NE(y0, y1);
  EXPECT_THROW(forward_sample(m, std::vector<double>(9, 0.0), std::span<const double>(a.col(0).data(), 10)),
               std::invalid_argument);
}

TEST(Forward, PositiveForExtremeInputs) {
  const auto m = init_model(Head::v, 4);
  const auto noise = draw_noise(m.parameter_count(), 1, 1, 0);
  for (double s : {-1e3, -10.0, 0.0, 10.0, 1e3}) {
    std::vector<double> x(10, s);
    EXPECT_GE(forward_sample(m, x, std::span<const double>(noise.data(), m.parameter_count())), 0.0);
  }
}

// 2 -> 1 -> 1: five parameters.
BnnModel five_parameter_model() {
  BnnModel m = init_model(Head::ms, 0, Architecture{{2, 1, 1}});
  EXPECT_EQ(m.parameter_count(), 5u);
  return m;
}

TEST(Kl, ZeroWhenPosteriorEqualsPrior) {
  auto m = five_parameter_model();
  for (auto& v : m.means) v = 0.0;
  for (auto& r : m.raw_scales) r = inverse_softplus(m.prior_std);
  EXPECT_NEAR(kl_divergence(m), 0.0, 1e-14);
}

TEST(Kl, HalfForMeanOneStdAway) {
  auto m = five_parameter_model();
  for (auto& v : m.means) v = 0.0;
  for (auto& r : m.raw_scales) r = inverse_softplus(m.prior_std);
  m.means[2] = m.prior_std;
  EXPECT_NEAR(kl_divergence(m), 0.5, 1e-12);
}

TEST(Kl, MatchesMonteCarloEstimate) {
  auto m = five_parameter_model();
  test::Gen g(12);
  for (auto& v : m.means) v = g.uniform(-0.5, 0.5);
  for (auto& r : m.raw_scales) r = inverse_softplus(g.uniform(0.05, 0.6));
  const double sp = m.prior_std;
  double acc = 0.0;
  const int n = 1'000'000;
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < m.parameter_count(); ++i) {
      const double s = softplus(m.raw_scales[i]);
      const double e = g.normal();
      const double w = m.means[i] + s * e;
      const double log_q = -std::log(s) - 0.5 * e * e;
      const double log_p = -std::log(sp) - 0.5 * (w / sp) * (w / sp);
      acc += log_q - log_p;
    }
  }
  const double mc = acc / n;
  const double closed = kl_divergence(m);
  EXPECT_NEAR(mc, closed, 0.02 * closed);
}

TEST(Kl, NonNegativeProperty) {
  test::Gen g(13);
  for (int t = 0; t < 200; ++t) {
    auto m = five_parameter_model();
    for (auto& v : m.means) v = g.uniform(-2, 2);
    for (auto& r : m.raw_scales) r = g.uniform(-6, 3);
    EXPECT_GE(kl_divergence(m), 0.0);
  }
}

TEST(Wmsle, ZeroResidual) {
  const double y[] = {0.3, 1.0, 2.5};
  EXPECT_EQ(wmsle(y, y, 4.0, 0.25), 0.0);
}

TEST(Wmsle, HandEvaluatedExample) {
  const double y[] = {1.0};
  const double mu[] = {2.0};
  // 5 * (ln 2 - ln 3)^2
  EXPECT_NEAR(wmsle(y, mu, 4.0, 0.25), 0.8220097694658277, 1e-14);
}

TEST(Wmsle, WeightPeaksAtBoundary) {
  EXPECT_DOUBLE_EQ(wmsle_weight(1.0, 4.0, 0.25), 5.0);
  const double tail = 1.0 + 4.0 * std::exp(-4.5);
  EXPECT_NEAR(wmsle_weight(1.75, 4.0, 0.25), tail, 1e-14);
  EXPECT_NEAR(wmsle_weight(0.25, 4.0, 0.25), tail, 1e-14);
  double prev = wmsle_weight(1.0, 4.0, 0.25);
  for (double y = 1.05; y < 3.0; y += 0.05) {
    const double w = wmsle_weight(y, 4.0, 0.25);
    EXPECT_LT(w, prev);
    prev = w;
  }
}

TEST(Wmsle, RejectsBadInput) {
  const double a[] = {1.0, 2.0};
  const double b[] = {1.0};
  const double z[] = {0.0, 1.0};
  EXPECT_THROW(wmsle(a, b, 4, 0.25), std::invalid_argument);
  EXPECT_THROW(wmsle(a, z, 4, 0.25), std::invalid_argument);
}

Batch random_batch(std::size_t n, std::uint64_t seed) {
  // Standardization needs at least two distinct rows.
  Dataset d = test::oracle_rows(std::max<std::size_t>(n, 16), seed);
  const auto st = Standardization::fit(d);
  d.resize(n);
  return make_batch(d, Head::ms, st);
}

TEST(Loss, ZeroForExactFitWithoutKl) {
  BnnModel m = init_model(Head::ms, 0, kMini);
  for (auto& v : m.means) v = 0.0;
  for (auto& r : m.raw_scales) r = -60.0;
  m.means.back() = 0.7;  // output bias
  Batch b = random_batch(8, 1);
  for (auto& y : b.y) y = softplus(0.7);
  TrainConfig cfg;
  cfg.lambda0 = 0.0;
  const auto noise = draw_noise(m.parameter_count(), 5, 1, 0);
  EXPECT_NEAR(loss(m, b, cfg, 8, noise).total, 0.0, 1e-25);
}

TEST(Loss, ComposesKlAndWmsle) {
  BnnModel m = init_model(Head::ms, 4, kMini);
  const Batch b = random_batch(30, 2);
  TrainConfig cfg;
  const auto noise = draw_noise(m.parameter_count(), 7, 2, 0);
  const auto terms = loss(m, b, cfg, 30, noise);

  std::vector<double> mu(b.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::vector<double> x(b.x.col(static_cast<Eigen::Index>(i)).data(),
                          b.x.col(static_cast<Eigen::Index>(i)).data() + 10);
    for (Eigen::Index t = 0; t < noise.cols(); ++t) {
      mu[i] += forward_sample(m, x, std::span<const double>(noise.col(t).data(), m.parameter_count()));
    }
    mu[i] /= static_cast<double>(noise.cols());
  }
  const double expected = kl_divergence(m) / 30.0 + wmsle(b.y, mu, cfg.wmsle_alpha, cfg.wmsle_beta);
  EXPECT_NEAR(terms.total, expected, 1e-12 * expected);
  EXPECT_GE(terms.total, terms.kl_term);

  // A minibatch of 10 from 30 charges a third of the full-data KL share.
  const auto part = loss(m, b, cfg, 90, noise);
  EXPECT_NEAR(part.kl_term, kl_divergence(m) / 90.0 * (30.0 / 90.0), 1e-15);
  EXPECT_THROW(loss(m, Batch{}, cfg, 30, noise), std::invalid_argument);
}

TEST(Gradient, MatchesFiniteDifferencesWithoutKl) {
  BnnModel m = init_model(Head::ms, 7, kMini);
  const Batch b = random_batch(1, 3);
  TrainConfig cfg;
  cfg.lambda0 = 0.0;
  const auto noise = draw_noise(m.parameter_count(), 3, 3, 0);
  const auto check = gradient_check(m, b, cfg, 1, noise);
  EXPECT_LT(check.max_relative_error, 1e-4) << "worst parameter " << check.worst_parameter;
}

TEST(Gradient, MatchesFiniteDifferencesAtRandomPoints) {
  test::Gen g(21);
  for (int point = 0; point < 3; ++point) {
    BnnModel m = init_model(Head::v, 30 + static_cast<std::uint64_t>(point), kMini);
    for (auto& v : m.means) v = g.uniform(-0.8, 0.8);
    for (auto& r : m.raw_scales) r = g.uniform(-4, -1);
    const Batch b = random_batch(6, 40 + static_cast<std::uint64_t>(point));
    TrainConfig cfg;
    const auto noise = draw_noise(m.parameter_count(), 4, static_cast<std::uint64_t>(point), 0);
    EXPECT_LT(gradient_check(m, b, cfg, 50, noise).max_relative_error, 1e-4);
  }
}

TEST(Gradient, ReducesToKlGradientAtExactFit) {
  BnnModel m = init_model(Head::mc, 8, kMini);
  Batch b = random_batch(5, 4);
  TrainConfig cfg;
  const auto noise = draw_noise(m.parameter_count(), 3, 4, 0);
  // Arrange y = mu under the frozen noise so the data term vanishes.
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::vector<double> x(b.x.col(static_cast<Eigen::Index>(i)).data(),
                          b.x.col(static_cast<Eigen::Index>(i)).data() + 10);
    double mu = 0.0;
    for (Eigen::Index t = 0; t < noise.cols(); ++t) {
      mu += forward_sample(m, x, std::span<const double>(noise.col(t).data(), m.parameter_count()));
    }
    b.y[i] = mu / static_cast<double>(noise.cols());
  }
  const std::size_t n_train = 20;
  const auto g = loss_gradient(m, b, cfg, n_train, noise);
  const auto kg = kl_gradient(m);
  const double coef = cfg.lambda0 / n_train * (5.0 / n_train);
  for (std::size_t i = 0; i < m.parameter_count(); ++i) {
    EXPECT_NEAR(g.d_means[i], coef * kg.d_means[i], 1e-6 * std::max(1.0, std::abs(coef * kg.d_means[i])));
    EXPECT_NEAR(g.d_raw_scales[i], coef * kg.d_raw_scales[i], 1e-6 * std::max(1.0, std::abs(coef * kg.d_raw_scales[i])));
  }

  // Closed-form KL gradient against central differences of the KL itself.
  BnnModel probe = m;
  const double h = 1e-6;
  for (std::size_t i = 0; i < m.parameter_count(); i += 5) {
    probe.raw_scales[i] = m.raw_scales[i] + h;
    const double up = kl_divergence(probe);
    probe.raw_scales[i] = m.raw_scales[i] - h;
    const double down = kl_divergence(probe);
    probe.raw_scales[i] = m.raw_scales[i];
    EXPECT_NEAR(kg.d_raw_scales[i], (up - down) / (2 * h), 1e-6 * std::max(1.0, std::abs(kg.d_raw_scales[i])));
  }
}

TEST(Train, LossDecreasesOnOracleData) {
  const Dataset d = test::oracle_rows(1000, 5);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 1;
  const auto r = train(d, Head::ms, cfg);
  ASSERT_EQ(r.epoch_losses.size(), 5u);
  EXPECT_LT(r.epoch_losses.back(), r.initial_loss);
  EXPECT_EQ(r.model.train_config_fingerprint, cfg.fingerprint());
}

TEST(Train, SameSeedSameModel) {
  const Dataset d = test::oracle_rows(200, 6);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  const auto a = train(d, Head::v, cfg, kMini);
  const auto b = train(d, Head::v, cfg, kMini);
  EXPECT_EQ(a.model.means, b.model.means);
  EXPECT_EQ(a.model.raw_scales, b.model.raw_scales);
}

TEST(Train, ConstantLabelsGiveConstantPrediction) {
  Dataset d = test::oracle_rows(500, 7);
  for (auto& r : d) r.eta = {2.0, 2.0, 2.0};
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 5e-3;
  cfg.seed = 3;
  const auto m = train(d, Head::mc, cfg, Architecture{{10, 16, 1}}).model;
  test::Gen g(8);
  double sum = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto p = predict(m, g.params(), 200, 1);
    sum += p.mu;
    // Pointwise deviations stay inside the epistemic spread.
    EXPECT_LE(std::abs(p.mu - 2.0), std::max(0.25, p.sigma));
  }
  EXPECT_NEAR(sum / 100.0, 2.0, 0.1);
}

TEST(Train, RejectsDegenerateInput) {
  Dataset d = test::oracle_rows(50, 8);
  for (auto& r : d) r.x.width_m = 5.0;
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(d, Head::ms, cfg), ValidationError);
  Dataset bad = test::oracle_rows(50, 8);
  bad[3].eta.eta_v = 0.0;
  EXPECT_THROW(train(bad, Head::v, cfg), ValidationError);
  EXPECT_THROW(train({}, Head::v, cfg), ValidationError);
  cfg.epochs = 0;
  EXPECT_THROW(train(test::oracle_rows(50, 8), Head::v, cfg), ValidationError);
}

TEST(Predict, CollapsedPosteriorIsDeterministicNetwork) {
  auto m = init_model(Head::ms, 11);
  for (auto& r : m.raw_scales) r = -200.0;
  const auto x = schema_midpoint(FeatureSchema::canonical());
  const auto p = predict(m, x, 50, 3);
  const auto arr = x.to_array();
  const std::vector<double> zero(m.parameter_count(), 0.0);
  EXPECT_NEAR(p.mu, forward_sample(m, std::vector<double>(arr.begin(), arr.end()), zero), 1e-12);
  EXPECT_NEAR(p.sigma, 0.0, 1e-12);
}

TEST(Predict, DeterministicAndScaled) {
  auto m = init_model(Head::ms, 12);
  m.kappa = 1.7;
  const auto x = schema_midpoint(FeatureSchema::canonical());
  const auto a = predict(m, x, 1000, 5);
  const auto b = predict(m, x, 1000, 5);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.sigma_scaled, 1.7 * a.sigma);
  EXPECT_EQ(a.n_passes, 1000u);
  EXPECT_GT(a.mu, 0.0);
}

TEST(Predict, UnbiasedMomentsMatchDirectPasses) {
  auto m = init_model(Head::v, 13, kMini);
  const auto x = schema_midpoint(FeatureSchema::canonical());
  const auto p = predict(m, x, 5, 2);
  const auto mom = predict_moments(m, feature_matrix(std::vector<BridgeParams>{x}), 5, 2);
  EXPECT_EQ(p.mu, mom.mean[0]);
  EXPECT_EQ(p.sigma, mom.stddev[0]);
}

TEST(Predict, MonteCarloConvergence) {
  const auto& m = test::small_surrogates()[Head::ms];
  const auto x = schema_midpoint(FeatureSchema::canonical());
  const auto small = predict(m, x, 1000, 1);
  const auto large = predict(m, x, 100000, 2);
  EXPECT_NEAR(small.sigma, large.sigma, 0.1 * large.sigma);
}

TEST(Predict, RejectsInvalidInput) {
  const auto m = init_model(Head::ms, 1);
  auto x = schema_midpoint(FeatureSchema::canonical());
  EXPECT_THROW(predict(m, x, 1), std::invalid_argument);
  x.span_m = 99;
  EXPECT_THROW(predict(m, x), ValidationError);
}

TEST(Predict, ColumnsShareNoiseAcrossBatch) {
  const auto& m = test::small_surrogates()[Head::mc];
  test::Gen g(4);
  std::vector<BridgeParams> xs{g.params(), g.params(), g.params()};
  const auto batch = predict_moments(m, feature_matrix(xs), 64, 7);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto single = predict(m, xs[i], 64, 7);
    EXPECT_DOUBLE_EQ(batch.mean[static_cast<Eigen::Index>(i)], single.mu);
    EXPECT_NEAR(batch.stddev[static_cast<Eigen::Index>(i)], single.sigma, 1e-12);
  }
}

TEST(ModelFile, RoundTripIsExact) {
  auto m = test::small_surrogates()[Head::v];
  m.kappa = 2.35;
  const auto dir = test::scratch_dir("model_file");
  save_model(m, dir / "m.json");
  const auto back = load_model(dir / "m.json");
  EXPECT_EQ(back.head, m.head);
  EXPECT_EQ(back.architecture, m.architecture);
  EXPECT_EQ(back.means, m.means);
  EXPECT_EQ(back.raw_scales, m.raw_scales);
  EXPECT_EQ(back.standardization.mean, m.standardization.mean);
  EXPECT_EQ(back.standardization.stddev, m.standardization.stddev);
  EXPECT_EQ(back.kappa, 2.35);
  EXPECT_EQ(back.prior_std, m.prior_std);
  EXPECT_EQ(back.train_config_fingerprint, m.train_config_fingerprint);

  const auto j = to_json(m);
  for (const char* key : {"format_version", "head", "schema", "architecture", "standardization", "prior_std",
                          "variational_means", "variational_raw_scales", "kappa", "train_config_fingerprint"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(ModelFile, RejectsMalformedDocuments) {
  const auto good = to_json(test::small_surrogates()[Head::ms]);
  auto wrong_version = good;
  wrong_version["format_version"] = 99;
  EXPECT_THROW(model_from_json(wrong_version), ValidationError);
  auto short_means = good;
  short_means["variational_means"].erase(0);
  EXPECT_THROW(model_from_json(short_means), ValidationError);
  auto no_kappa = good;
  no_kappa.erase("kappa");
  EXPECT_THROW(model_from_json(no_kappa), ValidationError);
  auto bad_schema = good;
  bad_schema["schema"][0]["hi"] = 30.0;
  EXPECT_THROW(model_from_json(bad_schema), ValidationError);
  auto bad_head = good;
  bad_head["head"] = "x";
  EXPECT_THROW(model_from_json(bad_head), ValidationError);
}

TEST(TrainConfigJson, RoundTripAndFingerprint) {
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.seed = 99;
  const auto back = train_config_from_json(to_json(cfg));
  EXPECT_EQ(back.epochs, 12u);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.fingerprint(), cfg.fingerprint());
  TrainConfig other = cfg;
  other.learning_rate = 2e-3;
  EXPECT_NE(other.fingerprint(), cfg.fingerprint());
  EXPECT_THROW(train_config_from_json({{"epochz", 3}}), ValidationError);
  EXPECT_THROW(train_config_from_json({{"epochs", 0}}), ValidationError);
}

}  // namespace
}  // namespace bt

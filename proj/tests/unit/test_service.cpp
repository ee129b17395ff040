#include <gtest/gtest.h>

#include <cstdlib>
#include <future>
#include <thread>

#include "bridgetriage/dataset_io.hpp"
#include "bridgetriage/service.hpp"
#include "bridgetriage/triage.hpp"
#include "support.hpp"

// After Eigen: the resolver header defines an _res macro.
#include <httplib.h>

namespace bt {
namespace {

using nlohmann::json;

std::filesystem::path bundle_dir(const std::string& name, bool with_ranking) {
  const auto dir = test::scratch_dir(name);
  const auto& models = test::small_surrogates();
  for (Head h : kHeads) save_model(models[h], model_file(dir, h));
  const auto background = make_background(20, 1);
  write_background(dir / "background.csv", background);
  if (with_ranking) {
    RankingOptions opt;
    opt.probe_points = 2;
    opt.background_size = 5;
    opt.mc_passes = 10;
    opt.n_coalitions = 64;
    write_file(dir / "ranking.json", to_json(compute_ranking(models, background, opt)).dump(2));
  }
  return dir;
}

ServiceConfig small_config() {
  ServiceConfig c;
  c.mc_passes = 100;
  c.marginal_samples = 16;
  c.reduced_mc_passes = 20;
  c.shap_coalitions = 64;
  c.shap_mc_passes = 10;
  c.shap_background = 5;
  return c;
}

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new std::filesystem::path(bundle_dir("service", true));
    service_ = new Service(load_bundle(*dir_), small_config());
  }
  static void TearDownTestSuite() {
    delete service_;
    delete dir_;
  }

  static json full_features() {
    const auto& s = FeatureSchema::canonical();
    const auto mid = schema_midpoint(s).to_array();
    json f = json::object();
    for (std::size_t i = 0; i < kFeatureCount; ++i) f[s[i].name] = mid[i];
    return f;
  }

  static json body_of(const HttpResponse& r) { return json::parse(r.body); }

  static void expect_error(const HttpResponse& r, int status, const std::string& code) {
    EXPECT_EQ(r.status, status) << r.body;
    const auto j = body_of(r);
    EXPECT_EQ(j["code"], code);
    EXPECT_TRUE(j["message"].is_string());
    EXPECT_TRUE(j.contains("details"));
  }

  static inline std::filesystem::path* dir_ = nullptr;
  static inline Service* service_ = nullptr;
};

TEST_F(ServiceTest, SchemaListsFeaturesAndRanking) {
  const auto r = service_->handle("GET", "/v1/schema", "");
  ASSERT_EQ(r.status, 200);
  const auto j = body_of(r);
  ASSERT_EQ(j["features"].size(), 10u);
  EXPECT_EQ(j["features"][0]["name"], "span_m");
  EXPECT_EQ(j["features"][0]["lo"], 2.0);
  EXPECT_EQ(j["features"][0]["hi"], 20.0);
  EXPECT_EQ(j["ranking"].size(), 10u);
  EXPECT_EQ(j["ranking_source"], "kernel_shap");
  EXPECT_EQ(service_->schema().body, r.body);
}

TEST(ServiceSchema, FallsBackToSchemaOrderWithoutRanking) {
  Service s(load_bundle(bundle_dir("service_noranking", false)), small_config());
  const auto j = json::parse(s.schema().body);
  EXPECT_EQ(j["ranking_source"], "schema_order");
  EXPECT_EQ(j["ranking"][0], "span_m");
  EXPECT_EQ(j["ranking"].size(), 10u);
}

TEST_F(ServiceTest, HealthReportsFingerprints) {
  const auto a = body_of(service_->handle("GET", "/v1/health", ""));
  EXPECT_EQ(a["status"], "ok");
  EXPECT_EQ(a["model_fingerprints"].size(), 3u);
  EXPECT_EQ(a["model_fingerprints"]["ms"], file_fingerprint(model_file(*dir_, Head::ms)));
  EXPECT_EQ(body_of(service_->health()), a);
}

TEST_F(ServiceTest, FullPrediction) {
  json req{{"features", full_features()}, {"seed", 7}};
  const auto r = service_->predict(req.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = body_of(r);
  EXPECT_EQ(j["input_mode"], "full");
  EXPECT_EQ(j["seed"], 7);
  for (const char* h : {"ms", "mc", "v"}) {
    const auto& head = j["heads"][h];
    EXPECT_DOUBLE_EQ(head["sigma_scaled"].get<double>(), head["kappa"].get<double>() * head["sigma"].get<double>());
  }
  EXPECT_TRUE(j["triage"].contains("klass"));
  // Same numbers as the library entry point.
  const auto direct = predict_full(test::small_surrogates(), schema_midpoint(FeatureSchema::canonical()), 100, 7);
  EXPECT_EQ(j["heads"]["v"]["mu"].get<double>(), direct[Head::v].mu);
}

TEST_F(ServiceTest, ReducedPrediction) {
  json f = json::object();
  for (const char* n : {"span_m", "deck_thickness_m", "wall_thickness_m", "clear_height_m", "width_m"}) {
    f[n] = full_features()[n];
  }
  const auto j = body_of(service_->predict(json{{"features", f}}.dump()));
  EXPECT_EQ(j["input_mode"], "reduced");
  EXPECT_EQ(j["diagnostics"]["missing"].size(), 5u);
  EXPECT_TRUE(j["diagnostics"]["between_variance_share"].contains("v"));
  EXPECT_EQ(j["diagnostics"]["completions"], 16);
  EXPECT_EQ(j["seed"], 0);
}

TEST_F(ServiceTest, PredictErrors) {
  json f = full_features();
  f["foo"] = 1.0;
  const auto unknown = service_->predict(json{{"features", f}}.dump());
  expect_error(unknown, 400, "invalid_features");
  EXPECT_NE(unknown.body.find("foo"), std::string::npos);

  json range = full_features();
  range["span_m"] = 99;
  const auto out = service_->predict(json{{"features", range}}.dump());
  EXPECT_EQ(out.status, 400);
  EXPECT_NE(out.body.find("span_m"), std::string::npos);

  expect_error(service_->predict(R"({"features": {}})"), 422, "empty_features");
  expect_error(service_->predict("{not json"), 400, "invalid_json");
  expect_error(service_->predict(R"({"seed": 1})"), 400, "invalid_request");
  expect_error(service_->predict(json{{"features", full_features()}, {"seed", -3}}.dump()), 400, "invalid_seed");
  json text = full_features();
  text["span_m"] = "ten";
  expect_error(service_->predict(json{{"features", text}}.dump()), 400, "invalid_features");
}

TEST_F(ServiceTest, IdenticalRequestsGiveIdenticalBodies) {
  const std::string req = json{{"features", full_features()}, {"seed", 11}}.dump();
  const auto first = service_->predict(req).body;
  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 4; ++i) {
    futures.push_back(std::async(std::launch::async, [&] { return service_->predict(req).body; }));
  }
  for (auto& f : futures) EXPECT_EQ(f.get(), first);
}

TEST_F(ServiceTest, ExplainReturnsAttributionAndGuidance) {
  json req{{"features", full_features()}, {"head", "v"}, {"seed", 3}};
  const auto r = service_->explain(req.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = body_of(r);
  double total = j["base_value"].get<double>();
  for (const auto& f : j["features"]) total += f["shap"].get<double>();
  EXPECT_NEAR(total, j["prediction"].get<double>(), 1e-6);
  EXPECT_EQ(j["background_size"], 5);
  EXPECT_TRUE(j["next_feature"].is_string());
  EXPECT_EQ(j["next_feature"], j["ranking"][0]);

  json names = json::array();
  for (const auto& f : FeatureSchema::canonical().names()) names.push_back(f);
  req["known"] = names;
  EXPECT_TRUE(body_of(service_->explain(req.dump()))["next_feature"].is_null());
}

TEST_F(ServiceTest, ExplainErrors) {
  expect_error(service_->explain(json{{"features", full_features()}, {"head", "x"}}.dump()), 422, "unknown_head");
  json partial = full_features();
  partial.erase("width_m");
  const auto r = service_->explain(json{{"features", partial}, {"head", "ms"}}.dump());
  expect_error(r, 400, "partial_input");
  EXPECT_NE(r.body.find("width_m"), std::string::npos);
  expect_error(service_->explain(json{{"features", full_features()}, {"head", "ms"}, {"known", "span_m"}}.dump()), 400,
               "invalid_request");
}

std::string portfolio_csv(const std::vector<BridgeParams>& rows) {
  std::string s = feature_header() + "\n";
  for (const auto& p : rows) {
    const auto a = p.to_array();
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + format_double(a[i]);
    s += "\n";
  }
  return s;
}

TEST_F(ServiceTest, BatchTriageCsv) {
  auto p = schema_midpoint(FeatureSchema::canonical());
  auto bad = p;
  bad.span_m = 99;
  const auto r = service_->triage_batch(portfolio_csv({p, bad, p}));
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(r.content_type.rfind("text/csv", 0), 0u);
  const auto summary = json::parse(r.headers.at("X-Triage-Summary"));
  EXPECT_EQ(summary["n_errors"], 1);
  EXPECT_EQ(summary["n_red"].get<int>() + summary["n_orange"].get<int>() + summary["n_green"].get<int>(), 2);
  EXPECT_EQ(r.body.rfind(batch_triage_header() + "\n", 0), 0u);
  EXPECT_EQ(std::count(r.body.begin(), r.body.end(), '\n'), 4);
  EXPECT_NE(r.body.find("span_m"), std::string::npos);
}

TEST_F(ServiceTest, BatchTriageEmptyAndMalformed) {
  const auto empty = service_->triage_batch(feature_header() + "\n");
  ASSERT_EQ(empty.status, 200);
  EXPECT_EQ(json::parse(empty.headers.at("X-Triage-Summary"))["n_green"], 0);
  expect_error(service_->triage_batch("a,b,c\n1,2,3\n"), 400, "malformed_csv");
}

TEST_F(ServiceTest, UnknownRoute) {
  expect_error(service_->handle("GET", "/v2/nothing", ""), 404, "not_found");
  expect_error(service_->handle("DELETE", "/v1/predict", ""), 404, "not_found");
}

TEST_F(ServiceTest, LiveSocketRoundTrip) {
  ServiceConfig cfg = small_config();
  cfg.port = 0;
  cfg.cors_origin = "http://localhost:5173";
  Service live(load_bundle(*dir_), cfg);
  const int port = live.bind();
  ASSERT_GT(port, 0);
  std::thread t([&] { live.listen_after_bind(); });

  httplib::Client client("127.0.0.1", port);
  const auto schema = client.Get("/v1/schema");
  ASSERT_TRUE(schema);
  EXPECT_EQ(schema->status, 200);
  EXPECT_EQ(schema->body, service_->schema().body);
  EXPECT_EQ(schema->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");

  const std::string req = json{{"features", full_features()}, {"seed", 5}}.dump();
  const auto pred = client.Post("/v1/predict", req, "application/json");
  ASSERT_TRUE(pred);
  EXPECT_EQ(pred->status, 200);
  EXPECT_EQ(pred->body, service_->predict(req).body);

  const auto batch = client.Post("/v1/triage/batch", portfolio_csv({schema_midpoint(FeatureSchema::canonical())}),
                                 "text/csv");
  ASSERT_TRUE(batch);
  EXPECT_EQ(batch->status, 200);
  EXPECT_FALSE(batch->get_header_value("X-Triage-Summary").empty());

  const auto missing = client.Get("/nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["code"], "not_found");

  const auto big = client.Post("/v1/predict", std::string(cfg.max_body_bytes + 10, ' '), "application/json");
  ASSERT_TRUE(big);
  EXPECT_EQ(big->status, 413);

  live.stop();
  t.join();
}

TEST(ServiceConfigTest, FileEnvironmentAndAddr) {
  const json j{{"addr", "0.0.0.0:9000"}, {"model_dir", "/tmp/m"}, {"mc_passes", 50}, {"cors_origin", "http://x"}};
  auto c = ServiceConfig::from_json(j);
  EXPECT_EQ(c.host, "0.0.0.0");
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.mc_passes, 50u);
  EXPECT_THROW(ServiceConfig::from_json(json{{"bogus", 1}}), ValidationError);
  EXPECT_THROW(ServiceConfig::from_json(json{{"mc_passes", 1}}), ValidationError);
  EXPECT_THROW(c.set_addr("nohost"), ValidationError);
  EXPECT_THROW(c.set_addr("h:99999"), ValidationError);

  ::setenv("BT_ADDR", "127.0.0.1:8123", 1);
  ::setenv("BT_MODEL_DIR", "/srv/models", 1);
  c.apply_environment();
  ::unsetenv("BT_ADDR");
  ::unsetenv("BT_MODEL_DIR");
  EXPECT_EQ(c.port, 8123);
  EXPECT_EQ(c.model_dir, "/srv/models");
}

TEST(Bundle, RejectsIncompleteDirectoryAndTracksFingerprints) {
  const auto dir = bundle_dir("bundle", false);
  const auto b = load_bundle(dir);
  EXPECT_EQ(b.background.size(), 20u);
  EXPECT_FALSE(b.ranking);
  const auto before = b.fingerprints;
  EXPECT_EQ(load_bundle(dir).fingerprints, before);

  auto m = test::small_surrogates()[Head::mc];
  m.kappa = 1.25;
  save_model(m, model_file(dir, Head::mc));
  const auto after = load_bundle(dir).fingerprints;
  EXPECT_EQ(after[0], before[0]);
  EXPECT_NE(after[1], before[1]);
  EXPECT_EQ(after[2], before[2]);

  save_model(test::small_surrogates()[Head::ms], model_file(dir, Head::v));
  EXPECT_THROW(load_bundle(dir), ValidationError);
  std::filesystem::remove(model_file(dir, Head::v));
  EXPECT_THROW(load_bundle(dir), ValidationError);
}

TEST(Bundle, RankingRoundTrip) {
  FeatureRanking r;
  r.overall = {3, 1, 2, 0, 4, 5, 6, 7, 8, 9};
  for (auto& h : r.by_head) h = r.overall;
  for (auto& v : r.importance) v.assign(10, 0.5);
  const auto back = ranking_from_json(to_json(r));
  EXPECT_EQ(back.overall, r.overall);
  EXPECT_EQ(back.importance[2], r.importance[2]);
}

}  // namespace
}  // namespace bt

#include "bridgetriage/service.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <httplib.h>

#include "bridgetriage/dataset_io.hpp"
#include "bridgetriage/hash.hpp"
#include "bridgetriage/triage.hpp"

namespace bt {

namespace {

std::atomic<std::uint64_t> g_error_counter{0};

HttpResponse json_response(int status, const nlohmann::json& j) {
  HttpResponse r;
  r.status = status;
  r.body = j.dump();
  return r;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ValidationError("address must be host:port, got '" + addr + "'");
  int port = -1;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
  }
  if (colon == 0 || port < 0 || port > 65535) throw ValidationError("address must be host:port, got '" + addr + "'");
  return {addr.substr(0, colon), port};
}

// Parses the request body as a JSON object or returns an error response.
std::optional<HttpResponse> parse_object(std::string_view body, nlohmann::json& out) {
  try {
    out = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_response(400, "invalid_json", "request body is not valid JSON", nlohmann::json::array({e.what()}));
  }
  if (!out.is_object()) return error_response(400, "invalid_json", "request body must be a JSON object");
  return std::nullopt;
}

struct FeatureParse {
  std::map<std::string, double> values;
  std::vector<std::string> problems;
};

FeatureParse parse_features(const nlohmann::json& features) {
  FeatureParse out;
  const auto& schema = FeatureSchema::canonical();
  for (const auto& [name, value] : features.items()) {
    if (!schema.index_of(name)) {
      out.problems.push_back(name + ": unknown feature");
    } else if (!value.is_number()) {
      out.problems.push_back(name + ": not a number");
    } else {
      out.values[name] = value.get<double>();
    }
  }
  return out;
}

std::optional<std::uint64_t> parse_seed(const nlohmann::json& req, std::uint64_t fallback,
                                        std::optional<HttpResponse>& error) {
  if (!req.contains("seed") || req.at("seed").is_null()) return fallback;
  const auto& s = req.at("seed");
  if (!s.is_number_unsigned()) {
    error = error_response(400, "invalid_seed", "seed must be a nonnegative integer");
    return std::nullopt;
  }
  return s.get<std::uint64_t>();
}

}  // namespace

HttpResponse error_response(int status, std::string_view code, std::string_view message, const nlohmann::json& details) {
  return json_response(status, {{"code", code}, {"message", message}, {"details", details}});
}

nlohmann::json prediction_json(const ReducedPrediction& pred, std::uint64_t seed) {
  nlohmann::json diagnostics{{"completions", pred.completions}, {"passes_per_completion", pred.passes_per_completion}};
  if (pred.reduced) {
    diagnostics["missing"] = pred.missing;
    nlohmann::json share = nlohmann::json::object();
    nlohmann::json marg = nlohmann::json::object();
    for (Head h : kHeads) {
      share[std::string(head_name(h))] = pred.diagnostics[head_index(h)].between_share;
      marg[std::string(head_name(h))] = to_json(pred.diagnostics[head_index(h)]);
    }
    diagnostics["between_variance_share"] = share;
    diagnostics["marginalization"] = marg;
  }
  nlohmann::json heads = nlohmann::json::object();
  for (Head h : kHeads) {
    const auto& p = pred.distribution[h];
    heads[std::string(head_name(h))] = {
        {"mu", p.mu}, {"sigma", p.sigma}, {"sigma_scaled", p.sigma_scaled}, {"kappa", p.kappa}};
  }
  return {{"heads", heads},
          {"triage", to_json(triage(pred.distribution))},
          {"input_mode", pred.reduced ? "reduced" : "full"},
          {"diagnostics", diagnostics},
          {"seed", seed}};
}

nlohmann::json explanation_json(const Attribution& a, const std::vector<bool>& known) {
  const auto& schema = FeatureSchema::canonical();
  const Attribution single[] = {a};
  const auto ranking = rank_features(single);
  const auto next = next_feature_guidance(known, ranking);
  nlohmann::json j = to_json(a);
  j["next_feature"] = next ? nlohmann::json(schema[*next].name) : nlohmann::json(nullptr);
  auto names = nlohmann::json::array();
  for (auto i : ranking) names.push_back(schema[i].name);
  j["ranking"] = names;
  return j;
}

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("service config must be a JSON object");
  ServiceConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "addr") {
        c.set_addr(value.get<std::string>());
      } else if (key == "host") {
        c.host = value.get<std::string>();
      } else if (key == "port") {
        c.port = value.get<int>();
      } else if (key == "model_dir") {
        c.model_dir = value.get<std::string>();
      } else if (key == "max_body_bytes") {
        c.max_body_bytes = value.get<std::size_t>();
      } else if (key == "request_timeout_s") {
        c.request_timeout_s = value.get<int>();
      } else if (key == "cors_origin") {
        c.cors_origin = value.get<std::string>();
      } else if (key == "mc_passes") {
        c.mc_passes = value.get<std::size_t>();
      } else if (key == "marginal_samples") {
        c.marginal_samples = value.get<std::size_t>();
      } else if (key == "reduced_mc_passes") {
        c.reduced_mc_passes = value.get<std::size_t>();
      } else if (key == "shap_coalitions") {
        c.shap_coalitions = value.get<std::size_t>();
      } else if (key == "shap_mc_passes") {
        c.shap_mc_passes = value.get<std::size_t>();
      } else if (key == "seed") {
        c.default_seed = value.get<std::uint64_t>();
      } else if (key == "shap_background") {
        c.shap_background = value.get<std::size_t>();
      } else {
        throw ValidationError("service config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("service config: ") + e.what());
  }
  if (c.mc_passes < 2 || c.reduced_mc_passes < 2 || c.marginal_samples < 2) {
    throw ValidationError("service config: pass and sample counts must be at least 2");
  }
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("service config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void ServiceConfig::set_addr(const std::string& addr) { std::tie(host, port) = split_addr(addr); }

void ServiceConfig::apply_environment() {
  if (const char* addr = std::getenv("BT_ADDR"); addr && *addr) set_addr(addr);
  if (const char* dir = std::getenv("BT_MODEL_DIR"); dir && *dir) model_dir = dir;
}

struct Service::Server {
  httplib::Server http;
};

Service::Service(ModelBundle bundle, ServiceConfig config) : bundle_(std::move(bundle)), config_(std::move(config)) {
  schema_body_ = schema_json().dump();
}

Service::~Service() = default;

nlohmann::json Service::schema_json() const {
  const auto& schema = FeatureSchema::canonical();
  auto features = nlohmann::json::array();
  for (const auto& f : schema.features()) {
    features.push_back({{"name", f.name}, {"unit", f.unit}, {"lo", f.lo}, {"hi", f.hi}, {"description", f.description}});
  }
  nlohmann::json j{{"features", features}};
  if (bundle_.ranking) {
    const auto r = to_json(*bundle_.ranking);
    j["ranking"] = r.at("ranking");
    j["ranking_by_head"] = r.at("by_head");
    j["ranking_source"] = "kernel_shap";
  } else {
    j["ranking"] = schema.names();
    j["ranking_source"] = "schema_order";
  }
  return j;
}

HttpResponse Service::schema() const {
  HttpResponse r;
  r.body = schema_body_;
  return r;
}

HttpResponse Service::health() const {
  nlohmann::json fp = nlohmann::json::object();
  for (Head h : kHeads) fp[std::string(head_name(h))] = bundle_.fingerprints[head_index(h)];
  return json_response(200, {{"status", "ok"}, {"model_fingerprints", fp}});
}

HttpResponse Service::predict(std::string_view body) const {
  nlohmann::json req;
  if (auto err = parse_object(body, req)) return *err;
  if (!req.contains("features") || !req.at("features").is_object()) {
    return error_response(400, "invalid_request", "body must contain a 'features' object");
  }
  if (req.at("features").empty()) {
    return error_response(422, "empty_features", "at least one feature must be provided");
  }
  std::optional<HttpResponse> seed_error;
  const auto seed = parse_seed(req, config_.default_seed, seed_error);
  if (!seed) return *seed_error;

  FeatureParse parsed = parse_features(req.at("features"));
  if (!parsed.problems.empty()) {
    return error_response(400, "invalid_features", "unknown or malformed features", parsed.problems);
  }
  Query q;
  try {
    q = Query::from_features(parsed.values);
  } catch (const ValidationError& e) {
    return error_response(400, "invalid_features", e.what(), e.details());
  }
  q.seed = *seed;
  q.n_mc_passes = config_.mc_passes;
  q.n_marginal_samples = config_.marginal_samples;
  q.reduced_mc_passes = config_.reduced_mc_passes;

  return json_response(200, prediction_json(predict_reduced(bundle_.surrogates, q), *seed));
}

HttpResponse Service::explain(std::string_view body) const {
  nlohmann::json req;
  if (auto err = parse_object(body, req)) return *err;
  const std::string head_str = req.contains("head") && req.at("head").is_string() ? req.at("head").get<std::string>() : "";
  const auto head = parse_head(head_str);
  if (!head) return error_response(422, "unknown_head", "head must be one of ms, mc, v", {head_str});
  if (!req.contains("features") || !req.at("features").is_object()) {
    return error_response(400, "invalid_request", "body must contain a 'features' object");
  }
  std::optional<HttpResponse> seed_error;
  const auto seed = parse_seed(req, config_.default_seed, seed_error);
  if (!seed) return *seed_error;

  FeatureParse parsed = parse_features(req.at("features"));
  if (!parsed.problems.empty()) {
    return error_response(400, "invalid_features", "unknown or malformed features", parsed.problems);
  }
  const auto& schema = FeatureSchema::canonical();
  if (parsed.values.size() != kFeatureCount) {
    std::vector<std::string> missing;
    for (const auto& name : schema.names()) {
      if (!parsed.values.count(name)) missing.push_back(name);
    }
    return error_response(400, "partial_input", "explain needs all 10 features", missing);
  }
  Query q;
  try {
    q = Query::from_features(parsed.values);
  } catch (const ValidationError& e) {
    return error_response(400, "invalid_features", e.what(), e.details());
  }

  std::vector<bool> known(kFeatureCount, false);
  if (req.contains("known")) {
    if (!req.at("known").is_array()) return error_response(400, "invalid_request", "'known' must be an array of names");
    std::vector<std::string> bad;
    for (const auto& n : req.at("known")) {
      const auto idx = n.is_string() ? schema.index_of(n.get<std::string>()) : std::nullopt;
      if (!idx) {
        bad.push_back(n.dump());
      } else {
        known[*idx] = true;
      }
    }
    if (!bad.empty()) return error_response(400, "invalid_features", "unknown names in 'known'", bad);
  }

  std::array<double, kFeatureCount> values{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) values[i] = *q.known[i];
  const std::size_t bg_n = std::min(config_.shap_background, bundle_.background.size());
  const Attribution a =
      bt::explain(bundle_.surrogates[*head], BridgeParams::from_array(values),
                  std::span<const BridgeParams>(bundle_.background.data(), bg_n),
                  ExplainOptions{config_.shap_coalitions, config_.shap_mc_passes, *seed});
  return json_response(200, explanation_json(a, known));
}

HttpResponse Service::triage_batch(std::string_view body) const {
  std::istringstream is{std::string(body)};
  std::vector<FeatureRow> rows;
  try {
    rows = read_feature_csv(is);
  } catch (const CsvError& e) {
    return error_response(400, "malformed_csv", e.what());
  }
  std::vector<BridgeParams> params;
  std::vector<std::string> errors;
  for (const auto& r : rows) {
    params.push_back(r.params);
    errors.push_back(r.parse_error);
  }
  const BatchTriage batch = batch_triage(params, bundle_.surrogates, config_.mc_passes, config_.default_seed, errors);
  std::ostringstream os;
  write_batch_triage_csv(os, batch);
  HttpResponse r;
  r.content_type = "text/csv";
  r.body = os.str();
  r.headers["X-Triage-Summary"] = to_json(batch.summary).dump();
  return r;
}

HttpResponse Service::handle(std::string_view method, std::string_view path, std::string_view body) const {
  try {
    if (method == "GET" && path == "/v1/schema") return schema();
    if (method == "GET" && path == "/v1/health") return health();
    if (method == "POST" && path == "/v1/predict") return predict(body);
    if (method == "POST" && path == "/v1/explain") return explain(body);
    if (method == "POST" && path == "/v1/triage/batch") return triage_batch(body);
    return error_response(404, "not_found", "no such endpoint", {std::string(method) + " " + std::string(path)});
  } catch (const std::exception& e) {
    const std::uint64_t id = ++g_error_counter;
    std::ostringstream ref;
    ref << "E" << std::hex << fnv1a64(std::to_string(id) + e.what());
    std::cerr << "internal error " << ref.str() << ": " << e.what() << '\n';
    return error_response(500, "internal_error", "internal error", {{{"error_id", ref.str()}}});
  }
}

int Service::bind() {
  server_ = std::make_unique<Server>();
  auto& http = server_->http;
  http.set_payload_max_length(config_.max_body_bytes);
  http.set_read_timeout(config_.request_timeout_s, 0);
  http.set_write_timeout(config_.request_timeout_s, 0);

  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    if (!config_.cors_origin.empty()) {
      res.set_header("Access-Control-Allow-Origin", config_.cors_origin);
      res.set_header("Access-Control-Expose-Headers", "X-Triage-Summary");
    }
    res.set_content(r.body, r.content_type);
  };
  http.Get("/v1/schema", route);
  http.Get("/v1/health", route);
  http.Post("/v1/predict", route);
  http.Post("/v1/explain", route);
  http.Post("/v1/triage/batch", route);
  http.Options(R"(/v1/.*)", [this](const httplib::Request&, httplib::Response& res) {
    if (!config_.cors_origin.empty()) {
      res.set_header("Access-Control-Allow-Origin", config_.cors_origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
    res.status = 204;
  });
  http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const HttpResponse r = res.status == 413
                               ? error_response(413, "payload_too_large", "request body exceeds max_body_bytes")
                               : error_response(res.status, "not_found", "no such endpoint", {req.method + " " + req.path});
    res.set_content(r.body, r.content_type);
  });

  if (config_.port == 0) {
    const int port = http.bind_to_any_port(config_.host);
    if (port < 0) throw std::runtime_error("cannot bind " + config_.host);
    config_.port = port;
  } else if (!http.bind_to_port(config_.host, config_.port)) {
    throw std::runtime_error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  return config_.port;
}

void Service::listen_after_bind() {
  if (!server_) throw std::logic_error("Service::listen_after_bind called before bind");
  server_->http.listen_after_bind();
}

void Service::listen() {
  bind();
  listen_after_bind();
}

void Service::stop() {
  if (server_) server_->http.stop();
}

}  // namespace bt

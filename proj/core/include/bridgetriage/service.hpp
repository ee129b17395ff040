#pragma once

// HTTP front end over a loaded model bundle. Handlers are const and share
// only immutable state, so one Service serves concurrent requests.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bridgetriage/bundle.hpp"

namespace bt {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path model_dir = "models";
  std::size_t max_body_bytes = 1 << 20;
  int request_timeout_s = 30;
  std::string cors_origin;  // empty disables CORS headers

  // Inference budgets.
  std::size_t mc_passes = 1000;
  std::size_t marginal_samples = 256;
  std::size_t reduced_mc_passes = 100;
  std::size_t shap_coalitions = 2048;
  std::size_t shap_mc_passes = 200;
  std::size_t shap_background = kBackgroundSize;
  std::uint64_t default_seed = 0;  // for requests without a seed

  // File values first, then BT_ADDR (host:port) and BT_MODEL_DIR.
  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::filesystem::path& path);
  void apply_environment();
  // Parses "host:port"; throws ValidationError otherwise.
  void set_addr(const std::string& addr);
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

class Service {
 public:
  Service(ModelBundle bundle, ServiceConfig config);

  HttpResponse schema() const;
  HttpResponse health() const;
  HttpResponse predict(std::string_view body) const;
  HttpResponse explain(std::string_view body) const;
  HttpResponse triage_batch(std::string_view body) const;

  // Dispatches a request by method and path; unknown routes give 404.
  HttpResponse handle(std::string_view method, std::string_view path, std::string_view body) const;

  // Blocks serving HTTP until stop() is called from another thread.
  void listen();
  // Binds to an ephemeral port when config.port == 0 and returns it.
  int bind();
  void listen_after_bind();
  void stop();

  const ServiceConfig& config() const { return config_; }

  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

 private:
  struct Server;

  nlohmann::json schema_json() const;

  ModelBundle bundle_;
  ServiceConfig config_;
  std::string schema_body_;
  std::unique_ptr<Server> server_;
};

// Response documents shared by the HTTP handlers and the CLI.
nlohmann::json prediction_json(const ReducedPrediction& pred, std::uint64_t seed);
// Adds next_feature (null when all known) and the point's own ranking.
nlohmann::json explanation_json(const Attribution& a, const std::vector<bool>& known);

HttpResponse error_response(int status, std::string_view code, std::string_view message,
                            const nlohmann::json& details = nlohmann::json::array());

}  // namespace bt

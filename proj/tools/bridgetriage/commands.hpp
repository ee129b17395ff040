#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bt::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kInvalid = 2;
inline constexpr int kFailure = 3;

struct GenerateArgs {
  std::size_t n = 0;
  std::string strategy = "lhs";
  std::uint64_t seed = 0;
  std::string out;  // CSV goes to stdout when empty
};

struct TrainArgs {
  std::string data;
  std::string head = "all";
  std::string config;
  std::string out = "models";
  std::optional<std::uint64_t> seed;  // overrides the config file
  std::optional<std::size_t> epochs;
  std::size_t passes = 1000;  // held-out prediction passes
};

struct CalibrateArgs {
  std::string models = "models";
  std::string data;
  std::uint64_t seed = 0;
  std::string out;  // defaults to the models directory
  std::size_t passes = 1000;
  bool skip_ranking = false;
};

struct EvaluateArgs {
  std::string models = "models";
  std::string data;
  std::string report;
  std::uint64_t seed = 0;
  std::size_t passes = 1000;
};

struct PredictArgs {
  std::string models = "models";
  std::string features;
  bool reduced = false;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t passes = 1000;
  std::size_t marginal_samples = 256;
  std::size_t reduced_passes = 100;
};

struct ExplainArgs {
  std::string models = "models";
  std::string features;
  std::string head;
  std::vector<std::string> known;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t coalitions = 2048;
  std::size_t mc_passes = 200;
};

struct TriageArgs {
  std::string models = "models";
  std::string portfolio;
  std::uint64_t seed = 0;
  std::string out;  // CSV goes to stdout when empty
  std::size_t passes = 1000;
};

struct ServeArgs {
  std::string config;
  std::string models;
  std::string addr;
  std::optional<std::uint64_t> seed;
  std::string out;  // receives {"host", "port"} once bound
};

void run_generate(const GenerateArgs& a);
void run_train(const TrainArgs& a);
void run_calibrate(const CalibrateArgs& a);
void run_evaluate(const EvaluateArgs& a);
void run_predict(const PredictArgs& a);
void run_explain(const ExplainArgs& a);
void run_triage(const TriageArgs& a);
void run_serve(const ServeArgs& a);

}  // namespace bt::cli

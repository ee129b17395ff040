#pragma once

// On-disk model directory: one JSON file per head, the SHAP background
// set, the stored feature ranking and the training manifest.
//
//   bnn_ms.json  bnn_mc.json  bnn_v.json
//   background.csv   feature columns only
//   ranking.json     written by calibration
//   manifest.json    split seed and data fingerprint

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bridgetriage/attribution.hpp"
#include "bridgetriage/inference.hpp"

namespace bt {

inline constexpr std::size_t kBackgroundSize = 100;

std::filesystem::path model_file(const std::filesystem::path& dir, Head head);

struct FeatureRanking {
  std::vector<std::size_t> overall;
  std::array<std::vector<std::size_t>, 3> by_head;
  std::array<std::vector<double>, 3> importance;  // mean |shap| per feature
};

struct RankingOptions {
  std::size_t probe_points = 8;
  std::size_t background_size = 25;  // leading rows of the stored background
  std::size_t mc_passes = 50;
  std::size_t n_coalitions = 2048;
  std::uint64_t seed = 0;
};

// Attributes every head on an LHS probe set and ranks features per head;
// the overall order sums each head's normalized importance.
FeatureRanking compute_ranking(const SurrogateSet& models, std::span<const BridgeParams> background,
                               const RankingOptions& options = {});

nlohmann::json to_json(const FeatureRanking& r);
FeatureRanking ranking_from_json(const nlohmann::json& j);

struct ModelBundle {
  std::filesystem::path dir;
  SurrogateSet surrogates;
  std::vector<BridgeParams> background;
  std::optional<FeatureRanking> ranking;
  std::array<std::string, 3> fingerprints;  // FNV-1a of each model file's bytes
};

// Throws ValidationError unless all three head models load and agree with
// the canonical schema.
ModelBundle load_bundle(const std::filesystem::path& dir);

std::vector<BridgeParams> make_background(std::size_t n, std::uint64_t seed);
void write_background(const std::filesystem::path& path, std::span<const BridgeParams> rows);
std::vector<BridgeParams> read_background(const std::filesystem::path& path);

std::string file_fingerprint(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace bt

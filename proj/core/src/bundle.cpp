#include "bridgetriage/bundle.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bridgetriage/dataset_io.hpp"
#include "bridgetriage/hash.hpp"
#include "bridgetriage/sampling.hpp"

namespace bt {

std::filesystem::path model_file(const std::filesystem::path& dir, Head head) {
  return dir / ("bnn_" + std::string(head_name(head)) + ".json");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << contents;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string file_fingerprint(const std::filesystem::path& path) { return fnv1a64_hex(read_file(path)); }

std::vector<BridgeParams> make_background(std::size_t n, std::uint64_t seed) {
  const auto& schema = FeatureSchema::canonical();
  return scale_to_schema(lhs_sample(n, schema.size(), seed), schema);
}

void write_background(const std::filesystem::path& path, std::span<const BridgeParams> rows) {
  std::ostringstream os;
  os << feature_header() << '\n';
  for (const auto& r : rows) {
    const auto v = r.to_array();
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << format_double(v[i]);
    os << '\n';
  }
  write_file(path, os.str());
}

std::vector<BridgeParams> read_background(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  std::vector<BridgeParams> out;
  for (const auto& row : read_feature_csv(is)) {
    if (!row.parse_error.empty()) throw ValidationError("background file " + path.string() + ": " + row.parse_error);
    out.push_back(row.params);
  }
  return out;
}

FeatureRanking compute_ranking(const SurrogateSet& models, std::span<const BridgeParams> background,
                               const RankingOptions& options) {
  if (background.empty()) throw std::invalid_argument("compute_ranking: background is empty");
  const auto bg = background.first(std::min(options.background_size, background.size()));
  const auto probes = make_background(options.probe_points, options.seed + 7);

  FeatureRanking r;
  std::vector<double> combined(kFeatureCount, 0.0);
  for (Head h : kHeads) {
    std::vector<Attribution> attrs;
    for (const auto& p : probes) {
      attrs.push_back(explain(models[h], p, bg, ExplainOptions{options.n_coalitions, options.mc_passes, options.seed}));
    }
    r.importance[head_index(h)] = mean_abs_shap(attrs);
    r.by_head[head_index(h)] = rank_features(attrs);
    const auto& imp = r.importance[head_index(h)];
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0) {
      for (std::size_t i = 0; i < kFeatureCount; ++i) combined[i] += imp[i] / total;
    }
  }
  r.overall.resize(kFeatureCount);
  std::iota(r.overall.begin(), r.overall.end(), std::size_t{0});
  std::stable_sort(r.overall.begin(), r.overall.end(),
                   [&](std::size_t a, std::size_t b) { return combined[a] > combined[b]; });
  return r;
}

namespace {

nlohmann::json names_of(const std::vector<std::size_t>& order) {
  const auto& schema = FeatureSchema::canonical();
  auto arr = nlohmann::json::array();
  for (auto i : order) arr.push_back(schema[i].name);
  return arr;
}

std::vector<std::size_t> indices_of(const nlohmann::json& names) {
  const auto& schema = FeatureSchema::canonical();
  std::vector<std::size_t> out;
  for (const auto& n : names) {
    const auto idx = schema.index_of(n.get<std::string>());
    if (!idx) throw ValidationError("ranking file: unknown feature " + n.get<std::string>());
    out.push_back(*idx);
  }
  if (out.size() != kFeatureCount) throw ValidationError("ranking file: ranking must list all 10 features");
  return out;
}

}  // namespace

nlohmann::json to_json(const FeatureRanking& r) {
  nlohmann::json by_head = nlohmann::json::object();
  nlohmann::json importance = nlohmann::json::object();
  for (Head h : kHeads) {
    by_head[std::string(head_name(h))] = names_of(r.by_head[head_index(h)]);
    importance[std::string(head_name(h))] = r.importance[head_index(h)];
  }
  return nlohmann::json{{"ranking", names_of(r.overall)}, {"by_head", by_head}, {"mean_abs_shap", importance}};
}

FeatureRanking ranking_from_json(const nlohmann::json& j) {
  FeatureRanking r;
  try {
    r.overall = indices_of(j.at("ranking"));
    for (Head h : kHeads) {
      const std::string key(head_name(h));
      r.by_head[head_index(h)] = indices_of(j.at("by_head").at(key));
      r.importance[head_index(h)] = j.at("mean_abs_shap").at(key).get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("ranking file: ") + e.what());
  }
  return r;
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  ModelBundle b;
  b.dir = dir;
  std::vector<std::string> problems;
  for (Head h : kHeads) {
    const auto path = model_file(dir, h);
    if (!std::filesystem::exists(path)) {
      problems.push_back("missing " + path.string());
      continue;
    }
    BnnModel m = load_model(path);
    if (m.head != h) problems.push_back(path.string() + " holds head " + std::string(head_name(m.head)));
    b.surrogates[h] = std::move(m);
    b.fingerprints[head_index(h)] = file_fingerprint(path);
  }
  if (!problems.empty()) throw ValidationError("model directory " + dir.string() + " is incomplete", problems);

  const auto bg = dir / "background.csv";
  if (std::filesystem::exists(bg)) {
    b.background = read_background(bg);
  } else {
    b.background = make_background(kBackgroundSize, 0);
  }
  const auto ranking = dir / "ranking.json";
  if (std::filesystem::exists(ranking)) {
    try {
      b.ranking = ranking_from_json(nlohmann::json::parse(read_file(ranking)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("ranking.json is not valid JSON: " + std::string(e.what()));
    }
  }
  return b;
}

}  // namespace bt

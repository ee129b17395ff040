#include <fstream>
#include <sstream>

#include "bridgetriage/bnn.hpp"

namespace bt {

namespace {

nlohmann::json schema_json(const FeatureSchema& schema) {
  auto arr = nlohmann::json::array();
  for (const auto& f : schema.features()) {
    arr.push_back({{"name", f.name}, {"unit", f.unit}, {"lo", f.lo}, {"hi", f.hi}});
  }
  return arr;
}

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("model file: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("model file: field '") + key + "' has the wrong type");
  }
}

}  // namespace

nlohmann::json to_json(const BnnModel& m, const FeatureSchema& schema) {
  return nlohmann::json{
      {"format_version", kModelFormatVersion},
      {"head", std::string(head_name(m.head))},
      {"schema", schema_json(schema)},
      {"architecture",
       {{"layer_sizes", m.architecture.layer_sizes}, {"hidden_activation", "relu"}, {"output_activation", "softplus"}}},
      {"standardization", {{"mean", m.standardization.mean}, {"std", m.standardization.stddev}}},
      {"prior_std", m.prior_std},
      {"variational_means", m.means},
      {"variational_raw_scales", m.raw_scales},
      {"kappa", m.kappa},
      {"train_config_fingerprint", m.train_config_fingerprint},
  };
}

BnnModel model_from_json(const nlohmann::json& j, const FeatureSchema& schema) {
  if (!j.is_object()) throw ValidationError("model file: expected a JSON object");
  const int version = field<int>(j, "format_version");
  if (version != kModelFormatVersion) {
    throw ValidationError("model file: unsupported format_version " + std::to_string(version));
  }
  BnnModel m;
  const auto head = parse_head(field<std::string>(j, "head"));
  if (!head) throw ValidationError("model file: unknown head");
  m.head = *head;
  if (field<nlohmann::json>(j, "schema") != schema_json(schema)) {
    throw ValidationError("model file: feature schema does not match this build");
  }
  const auto arch = field<nlohmann::json>(j, "architecture");
  m.architecture.layer_sizes = field<std::vector<std::size_t>>(arch, "layer_sizes");
  const auto st = field<nlohmann::json>(j, "standardization");
  m.standardization.mean = field<std::vector<double>>(st, "mean");
  m.standardization.stddev = field<std::vector<double>>(st, "std");
  m.prior_std = field<double>(j, "prior_std");
  m.means = field<std::vector<double>>(j, "variational_means");
  m.raw_scales = field<std::vector<double>>(j, "variational_raw_scales");
  m.kappa = field<double>(j, "kappa");
  m.train_config_fingerprint = field<std::string>(j, "train_config_fingerprint");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
  if (m.architecture.input_size() != schema.size()) {
    throw ValidationError("model file: input size does not match the feature schema");
  }
  return m;
}

void save_model(const BnnModel& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write model file " + path.string());
  os << to_json(m).dump(1) << '\n';
  if (!os) throw std::runtime_error("failed writing model file " + path.string());
}

BnnModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("model file " + path.string() + " is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

nlohmann::json to_json(const HeadPrediction& p) {
  return nlohmann::json{{"mu", p.mu},
                        {"sigma", p.sigma},
                        {"sigma_scaled", p.sigma_scaled},
                        {"kappa", p.kappa},
                        {"n_passes", p.n_passes}};
}

}  // namespace bt

#pragma once

// Feature space, label space and the closed-form compliance oracle that
// generates training data and ground truth for reinforced-concrete frame
// bridges.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bt {

inline constexpr std::size_t kFeatureCount = 10;

// Prediction targets. Each head is trained as an independent model.
enum class Head : std::uint8_t { ms = 0, mc = 1, v = 2 };

inline constexpr std::array<Head, 3> kHeads{Head::ms, Head::mc, Head::v};

std::string_view head_name(Head head);
std::optional<Head> parse_head(std::string_view name);
constexpr std::size_t head_index(Head head) { return static_cast<std::size_t>(head); }

struct FeatureSpec {
  std::string name;
  std::string unit;
  double lo = 0.0;
  double hi = 0.0;
  std::string description;
};

class FeatureSchema {
 public:
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  // The fixed ranges every dataset and model in this project is built on.
  static const FeatureSchema& canonical();

  std::size_t size() const { return features_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::string> names() const;

  bool operator==(const FeatureSchema&) const;

 private:
  std::vector<FeatureSpec> features_;
};

bool operator==(const FeatureSpec& a, const FeatureSpec& b);

// One bridge. Field order is the schema order and the CSV column order.
struct BridgeParams {
  double span_m = 0.0;
  double deck_thickness_m = 0.0;
  double wall_thickness_m = 0.0;
  double clear_height_m = 0.0;
  double width_m = 0.0;
  double concrete_fc_mpa = 0.0;
  double steel_fy_mpa = 0.0;
  double reinf_ratio_long = 0.0;
  double reinf_ratio_shear = 0.0;
  double load_kn_m2 = 0.0;

  std::array<double, kFeatureCount> to_array() const;
  static BridgeParams from_array(std::span<const double> values);

  bool operator==(const BridgeParams&) const = default;
};

BridgeParams schema_midpoint(const FeatureSchema& schema);

struct ComplianceFactors {
  double eta_ms = 0.0;  // bending, reinforcing steel
  double eta_mc = 0.0;  // bending, concrete
  double eta_v = 0.0;   // shear

  double operator[](Head head) const;
  double min() const;

  bool operator==(const ComplianceFactors&) const = default;
};

struct Violation {
  enum class Kind { below_lo, above_hi, not_finite };

  std::string feature;
  Kind kind = Kind::below_lo;
  double value = 0.0;
  double bound = 0.0;

  std::string describe() const;
};

std::string_view violation_kind_name(Violation::Kind kind);

// Empty result means the point lies inside every closed range.
std::vector<Violation> validate_params(const BridgeParams& p, const FeatureSchema& schema);

// Raised for user-supplied data that fails validation. Distinct from
// std::invalid_argument, which flags programming errors.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& message, std::vector<std::string> details = {});
  const std::vector<std::string>& details() const { return details_; }

 private:
  std::vector<std::string> details_;
};

// Intermediate quantities of the oracle, per metre strip.
struct OracleBreakdown {
  double total_load = 0.0;       // kN/m2
  double effective_depth = 0.0;  // m
  double moment_demand = 0.0;    // kNm/m
  double moment_resistance_steel = 0.0;
  double moment_resistance_concrete = 0.0;
  double shear_demand = 0.0;  // kN/m
  double shear_resistance_concrete = 0.0;
  double shear_resistance_stirrups = 0.0;
  ComplianceFactors eta;
};

OracleBreakdown oracle_breakdown(const BridgeParams& p);
ComplianceFactors oracle_evaluate(const BridgeParams& p);

struct DatasetRow {
  BridgeParams x;
  ComplianceFactors eta;
};

using Dataset = std::vector<DatasetRow>;

// Labels every sample with the oracle. Throws ValidationError naming the
// first invalid row index.
Dataset generate_dataset(const FeatureSchema& schema, std::span<const BridgeParams> samples);

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

// Seeded shuffle followed by an 80/10/10 cut.
DatasetSplit split_dataset(const Dataset& data, std::uint64_t seed);

}  // namespace bt

#include "bridgetriage/domain.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "bridgetriage/rng.hpp"

namespace bt {

std::string_view head_name(Head head) {
  switch (head) {
    case Head::ms: return "ms";
    case Head::mc: return "mc";
    case Head::v: return "v";
  }
  return "?";
}

std::optional<Head> parse_head(std::string_view name) {
  for (Head h : kHeads) {
    if (head_name(h) == name) return h;
  }
  return std::nullopt;
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (!(f.lo < f.hi)) throw std::invalid_argument("feature '" + f.name + "' has lo >= hi");
    if (!seen.insert(f.name).second) throw std::invalid_argument("duplicate feature '" + f.name + "'");
  }
}

const FeatureSchema& FeatureSchema::canonical() {
  static const FeatureSchema schema({
      {"span_m", "m", 2.0, 20.0, "Clear span of the frame"},
      {"deck_thickness_m", "m", 0.2, 1.2, "Deck plate thickness"},
      {"wall_thickness_m", "m", 0.2, 1.0, "Abutment wall thickness"},
      {"clear_height_m", "m", 2.0, 8.0, "Clear height under the deck"},
      {"width_m", "m", 3.0, 15.0, "Bridge width"},
      {"concrete_fc_mpa", "MPa", 20.0, 50.0, "Concrete compressive strength"},
      {"steel_fy_mpa", "MPa", 390.0, 550.0, "Reinforcing steel yield strength"},
      {"reinf_ratio_long", "-", 0.002, 0.02, "Longitudinal reinforcement ratio"},
      {"reinf_ratio_shear", "-", 0.0, 0.008, "Shear reinforcement ratio"},
      {"load_kn_m2", "kN/m2", 10.0, 60.0, "Imposed surface load"},
  });
  return schema;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

bool operator==(const FeatureSpec& a, const FeatureSpec& b) {
  return a.name == b.name && a.unit == b.unit && a.lo == b.lo && a.hi == b.hi;
}

bool FeatureSchema::operator==(const FeatureSchema& other) const {
  return features_ == other.features_;
}

std::array<double, kFeatureCount> BridgeParams::to_array() const {
  return {span_m,          deck_thickness_m, wall_thickness_m, clear_height_m,    width_m,
          concrete_fc_mpa, steel_fy_mpa,     reinf_ratio_long, reinf_ratio_shear, load_kn_m2};
}

BridgeParams BridgeParams::from_array(std::span<const double> v) {
  if (v.size() != kFeatureCount) {
    throw std::invalid_argument("expected " + std::to_string(kFeatureCount) + " feature values, got " +
                                std::to_string(v.size()));
  }
  return BridgeParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
}

BridgeParams schema_midpoint(const FeatureSchema& schema) {
  std::vector<double> mid(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) mid[i] = 0.5 * (schema[i].lo + schema[i].hi);
  return BridgeParams::from_array(mid);
}

double ComplianceFactors::operator[](Head head) const {
  switch (head) {
    case Head::ms: return eta_ms;
    case Head::mc: return eta_mc;
    case Head::v: return eta_v;
  }
  return eta_ms;
}

double ComplianceFactors::min() const { return std::min({eta_ms, eta_mc, eta_v}); }

std::string_view violation_kind_name(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::below_lo: return "lo-undercut";
    case Violation::Kind::above_hi: return "hi-exceeded";
    case Violation::Kind::not_finite: return "not-finite";
  }
  return "?";
}

std::string Violation::describe() const {
  std::ostringstream os;
  os << feature << ": " << violation_kind_name(kind);
  if (kind == Kind::not_finite) return os.str();
  os << " (value " << value << ", bound " << bound << ")";
  return os.str();
}

std::vector<Violation> validate_params(const BridgeParams& p, const FeatureSchema& schema) {
  if (schema.size() != kFeatureCount) throw std::invalid_argument("schema must have 10 features");
  const auto values = p.to_array();
  std::vector<Violation> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const auto& f = schema[i];
    const double v = values[i];
    if (!std::isfinite(v)) {
      out.push_back({f.name, Violation::Kind::not_finite, v, 0.0});
    } else if (v < f.lo) {
      out.push_back({f.name, Violation::Kind::below_lo, v, f.lo});
    } else if (v > f.hi) {
      out.push_back({f.name, Violation::Kind::above_hi, v, f.hi});
    }
  }
  return out;
}

ValidationError::ValidationError(const std::string& message, std::vector<std::string> details)
    : std::runtime_error(message), details_(std::move(details)) {}

OracleBreakdown oracle_breakdown(const BridgeParams& p) {
  OracleBreakdown b;
  b.total_load = p.load_kn_m2 + 25.0 * p.deck_thickness_m;
  b.effective_depth = p.deck_thickness_m - 0.05;
  const double d = b.effective_depth;
  if (!(d > 0.0)) throw std::domain_error("effective depth must be positive");

  const double L = p.span_m;
  const double corner = 1.0 + 0.5 * (p.wall_thickness_m * p.clear_height_m) / (p.deck_thickness_m * L);
  b.moment_demand = b.total_load * L * L / 10.0 * corner;

  const double rho = p.reinf_ratio_long;
  const double fy = p.steel_fy_mpa;
  const double fc = p.concrete_fc_mpa;
  b.moment_resistance_steel = rho * 1000.0 * fy * d * d * (1.0 - 0.59 * rho * fy / fc);
  b.moment_resistance_concrete = 0.35 * 1000.0 * fc * d * d;

  b.shear_demand = b.total_load * L / 2.0 * (1.0 + 0.3 * p.clear_height_m / L);
  b.shear_resistance_concrete = 300.0 * std::sqrt(fc) * d;
  b.shear_resistance_stirrups = p.reinf_ratio_shear * 1000.0 * fy * 0.9 * d * 2.5;
  const double shear_resistance = std::max(b.shear_resistance_concrete, b.shear_resistance_stirrups);

  b.eta.eta_ms = b.moment_resistance_steel / b.moment_demand;
  b.eta.eta_mc = b.moment_resistance_concrete / b.moment_demand;
  b.eta.eta_v = shear_resistance / b.shear_demand;
  return b;
}

ComplianceFactors oracle_evaluate(const BridgeParams& p) { return oracle_breakdown(p).eta; }

Dataset generate_dataset(const FeatureSchema& schema, std::span<const BridgeParams> samples) {
  Dataset out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto violations = validate_params(samples[i], schema);
    if (!violations.empty()) {
      std::vector<std::string> details;
      for (const auto& v : violations) details.push_back(v.describe());
      throw ValidationError("row " + std::to_string(i) + " is outside the feature schema", std::move(details));
    }
    out.push_back({samples[i], oracle_evaluate(samples[i])});
  }
  return out;
}

DatasetSplit split_dataset(const Dataset& data, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0x5b1f);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
  const std::size_t n = data.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;

  DatasetSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = data[order[i]];
    if (i < n_train) {
      split.train.push_back(row);
    } else if (i < n_train + n_val) {
      split.validation.push_back(row);
    } else {
      split.test.push_back(row);
    }
  }
  return split;
}

}  // namespace bt

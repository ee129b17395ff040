#pragma once

// Red / orange / green decision policy on calibrated predictions.
//
//   red     mu <= 1                      critical, analyse first
//   orange  mu > 1 and mu - 2 k s < 1    likely safe, uncertainty high
//   green   mu > 1 and mu - 2 k s >= 1   compliant with high confidence
//
// A structure takes the worst class over its heads.

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bridgetriage/inference.hpp"

namespace bt {

enum class TriageClass : std::uint8_t { green = 0, orange = 1, red = 2 };

std::string_view class_name(TriageClass c);

inline constexpr double kNearBoundaryLimit = 1.1;

TriageClass classify_head(double mu, double sigma, double kappa);

struct HeadTriage {
  Head head = Head::ms;
  double mu = 0.0;
  double scaled_sigma = 0.0;  // kappa * sigma
  double lower_bound = 0.0;   // mu - 2 kappa sigma
  TriageClass klass = TriageClass::green;
  bool near_boundary = false;  // 1 < mu <= 1.1
};

struct TriageResult {
  TriageClass klass = TriageClass::green;
  Head governing_head = Head::v;
  std::array<HeadTriage, 3> per_head{};
  double margin = 0.0;  // governing head's lower bound minus 1
  bool near_boundary = false;

  const HeadTriage& operator[](Head h) const { return per_head[head_index(h)]; }
};

// Uses each head's sigma and kappa. Ties on the worst class go to v, then mc, then ms.
TriageResult triage(const PredictiveDistribution& pred);

struct TriageSummary {
  std::size_t n_red = 0;
  std::size_t n_orange = 0;
  std::size_t n_green = 0;
  std::size_t n_errors = 0;
};

struct BatchTriageRow {
  std::size_t row = 0;
  std::optional<PredictiveDistribution> prediction;
  std::optional<TriageResult> result;
  std::string error;
};

struct BatchTriage {
  std::vector<BatchTriageRow> rows;
  TriageSummary summary;
};

// Invalid rows are reported per row; valid rows are always processed.
// `extra_errors`, when given, carries upstream parse errors per row.
BatchTriage batch_triage(std::span<const BridgeParams> params, const SurrogateSet& models,
                         std::size_t n_passes = 1000, std::uint64_t seed = 0,
                         std::span<const std::string> extra_errors = {});

std::string batch_triage_header();
void write_batch_triage_csv(std::ostream& os, const BatchTriage& batch);

nlohmann::json to_json(const TriageResult& r);
nlohmann::json to_json(const TriageSummary& s);

}  // namespace bt

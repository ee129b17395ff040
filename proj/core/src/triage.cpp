#include "bridgetriage/triage.hpp"

#include <ostream>
#include <stdexcept>

#include "bridgetriage/dataset_io.hpp"

namespace bt {

std::string_view class_name(TriageClass c) {
  switch (c) {
    case TriageClass::green: return "green";
    case TriageClass::orange: return "orange";
    case TriageClass::red: return "red";
  }
  return "?";
}

TriageClass classify_head(double mu, double sigma, double kappa) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("classify_head: sigma must be nonnegative");
  if (!(kappa > 0.0)) throw std::invalid_argument("classify_head: kappa must be positive");
  if (!(mu > 1.0)) return TriageClass::red;
  return mu - 2.0 * kappa * sigma < 1.0 ? TriageClass::orange : TriageClass::green;
}

TriageResult triage(const PredictiveDistribution& pred) {
  TriageResult r;
  for (Head h : kHeads) {
    const HeadPrediction& p = pred[h];
    HeadTriage& t = r.per_head[head_index(h)];
    t.head = h;
    t.mu = p.mu;
    t.scaled_sigma = p.kappa * p.sigma;
    t.lower_bound = p.mu - 2.0 * t.scaled_sigma;
    t.klass = classify_head(p.mu, p.sigma, p.kappa);
    t.near_boundary = p.mu > 1.0 && p.mu <= kNearBoundaryLimit;
  }
  constexpr Head kTieOrder[] = {Head::v, Head::mc, Head::ms};
  r.governing_head = Head::v;
  r.klass = r[Head::v].klass;
  for (Head h : kTieOrder) {
    if (r[h].klass > r.klass) {
      r.klass = r[h].klass;
      r.governing_head = h;
    }
  }
  r.margin = r[r.governing_head].lower_bound - 1.0;
  r.near_boundary = r[r.governing_head].near_boundary;
  return r;
}

BatchTriage batch_triage(std::span<const BridgeParams> params, const SurrogateSet& models, std::size_t n_passes,
                         std::uint64_t seed, std::span<const std::string> extra_errors) {
  if (!extra_errors.empty() && extra_errors.size() != params.size()) {
    throw std::invalid_argument("batch_triage: extra_errors must match the row count");
  }
  const auto& schema = FeatureSchema::canonical();
  BatchTriage out;
  out.rows.resize(params.size());

  std::vector<std::size_t> valid;
  std::vector<BridgeParams> valid_params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    BatchTriageRow& row = out.rows[i];
    row.row = i;
    if (!extra_errors.empty() && !extra_errors[i].empty()) {
      row.error = extra_errors[i];
    } else {
      for (const auto& v : validate_params(params[i], schema)) {
        if (!row.error.empty()) row.error += "; ";
        row.error += v.describe();
      }
    }
    if (row.error.empty()) {
      valid.push_back(i);
      valid_params.push_back(params[i]);
    } else {
      ++out.summary.n_errors;
    }
  }

  if (!valid.empty()) {
    const Eigen::MatrixXd raw = feature_matrix(valid_params);
    std::vector<PredictiveDistribution> preds(valid.size());
    for (Head h : kHeads) {
      const BnnModel& m = models[h];
      const auto moments = predict_moments(m, raw, n_passes, seed);
      for (std::size_t k = 0; k < valid.size(); ++k) {
        HeadPrediction& p = preds[k][h];
        p.head = h;
        p.mu = moments.mean[static_cast<Eigen::Index>(k)];
        p.sigma = moments.stddev[static_cast<Eigen::Index>(k)];
        p.kappa = m.kappa;
        p.sigma_scaled = m.kappa * p.sigma;
        p.n_passes = n_passes;
      }
    }
    for (std::size_t k = 0; k < valid.size(); ++k) {
      BatchTriageRow& row = out.rows[valid[k]];
      row.prediction = preds[k];
      row.result = triage(preds[k]);
      switch (row.result->klass) {
        case TriageClass::red: ++out.summary.n_red; break;
        case TriageClass::orange: ++out.summary.n_orange; break;
        case TriageClass::green: ++out.summary.n_green; break;
      }
    }
  }
  return out;
}

std::string batch_triage_header() {
  return "row,klass,governing_head,mu_ms,sig_ms,mu_mc,sig_mc,mu_v,sig_v,margin,errors";
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write_batch_triage_csv(std::ostream& os, const BatchTriage& batch) {
  os << batch_triage_header() << '\n';
  for (const auto& row : batch.rows) {
    os << row.row << ',';
    if (row.result) {
      const auto& r = *row.result;
      os << class_name(r.klass) << ',' << head_name(r.governing_head);
      for (Head h : kHeads) {
        os << ',' << format_double(r[h].mu) << ',' << format_double(r[h].scaled_sigma);
      }
      os << ',' << format_double(r.margin) << ",\n";
    } else {
      os << ",,,,,,,,," << csv_escape(row.error) << '\n';
    }
  }
}

nlohmann::json to_json(const TriageResult& r) {
  nlohmann::json per_head = nlohmann::json::object();
  for (Head h : kHeads) {
    const auto& t = r[h];
    per_head[std::string(head_name(h))] = {{"mu", t.mu},
                                           {"sigma_scaled", t.scaled_sigma},
                                           {"lower_bound", t.lower_bound},
                                           {"klass", std::string(class_name(t.klass))},
                                           {"near_boundary", t.near_boundary}};
  }
  return nlohmann::json{{"klass", std::string(class_name(r.klass))},
                        {"governing_head", std::string(head_name(r.governing_head))},
                        {"margin", r.margin},
                        {"near_boundary", r.near_boundary},
                        {"per_head", per_head}};
}

nlohmann::json to_json(const TriageSummary& s) {
  return nlohmann::json{{"n_red", s.n_red}, {"n_orange", s.n_orange}, {"n_green", s.n_green}, {"n_errors", s.n_errors}};
}

}  // namespace bt

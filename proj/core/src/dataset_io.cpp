#include "bridgetriage/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace bt {

namespace {

constexpr std::string_view kLabelColumns[] = {"eta_ms", "eta_mc", "eta_v"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool getline_lf(std::istream& is, std::string& line) {
  if (!std::getline(is, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

// Returns the number of label columns (0 or 3) implied by the header.
std::size_t check_header(const std::string& line, bool labels_required) {
  const auto cells = split_csv_line(line);
  const auto& schema = FeatureSchema::canonical();
  if (cells.size() != kFeatureCount && cells.size() != kFeatureCount + 3) {
    throw CsvError("header must have 10 feature columns (optionally followed by 3 label columns), got " +
                   std::to_string(cells.size()));
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (trim(cells[i]) != schema[i].name) {
      throw CsvError("header column " + std::to_string(i) + " must be '" + schema[i].name + "', got '" +
                     std::string(trim(cells[i])) + "'");
    }
  }
  const std::size_t n_labels = cells.size() - kFeatureCount;
  for (std::size_t i = 0; i < n_labels; ++i) {
    if (trim(cells[kFeatureCount + i]) != kLabelColumns[i]) {
      throw CsvError("label column " + std::to_string(i) + " must be '" + std::string(kLabelColumns[i]) + "'");
    }
  }
  if (labels_required && n_labels == 0) throw CsvError("dataset file is missing the label columns");
  return n_labels;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
    throw CsvError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string feature_header() {
  std::string out;
  for (const auto& name : FeatureSchema::canonical().names()) {
    if (!out.empty()) out += ',';
    out += name;
  }
  return out;
}

std::string dataset_header() {
  std::string out = feature_header();
  for (auto label : kLabelColumns) {
    out += ',';
    out += label;
  }
  return out;
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
  os << dataset_header() << '\n';
  for (const auto& row : data) {
    for (double v : row.x.to_array()) os << format_double(v) << ',';
    os << format_double(row.eta.eta_ms) << ',' << format_double(row.eta.eta_mc) << ','
       << format_double(row.eta.eta_v) << '\n';
  }
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!getline_lf(is, line)) throw CsvError("empty dataset file");
  check_header(line, true);
  Dataset out;
  std::size_t line_no = 1;
  while (getline_lf(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != kFeatureCount + 3) {
      throw CsvError("line " + std::to_string(line_no) + ": expected 13 cells, got " + std::to_string(cells.size()));
    }
    std::array<double, kFeatureCount + 3> values{};
    try {
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = parse_double(cells[i]);
    } catch (const CsvError& e) {
      throw CsvError("line " + std::to_string(line_no) + ": " + e.what());
    }
    DatasetRow row;
    row.x = BridgeParams::from_array(std::span<const double>(values.data(), kFeatureCount));
    row.eta = {values[10], values[11], values[12]};
    out.push_back(row);
  }
  return out;
}

std::vector<FeatureRow> read_feature_csv(std::istream& is) {
  std::string line;
  if (!getline_lf(is, line)) throw CsvError("missing CSV header");
  const std::size_t n_cols = kFeatureCount + check_header(line, false);
  const auto& schema = FeatureSchema::canonical();

  std::vector<FeatureRow> rows;
  while (getline_lf(is, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    FeatureRow row;
    std::array<double, kFeatureCount> values;
    values.fill(std::numeric_limits<double>::quiet_NaN());
    if (cells.size() != n_cols) {
      row.parse_error = "expected " + std::to_string(n_cols) + " cells, got " + std::to_string(cells.size());
    }
    for (std::size_t i = 0; i < kFeatureCount && i < cells.size(); ++i) {
      try {
        values[i] = parse_double(cells[i]);
      } catch (const CsvError&) {
        if (!row.parse_error.empty()) row.parse_error += "; ";
        row.parse_error += schema[i].name + ": not a number";
      }
    }
    row.params = BridgeParams::from_array(values);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace bt

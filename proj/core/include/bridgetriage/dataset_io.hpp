#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bridgetriage/domain.hpp"

namespace bt {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);  // throws CsvError

std::string dataset_header();
std::string feature_header();

void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is);

// A feature row from a portfolio file. Cells that do not parse become NaN
// and `parse_error` names them; validation reports them as not finite.
struct FeatureRow {
  BridgeParams params;
  std::string parse_error;
};

// Accepts the dataset header or its first ten columns; label columns are
// ignored. A malformed header throws CsvError.
std::vector<FeatureRow> read_feature_csv(std::istream& is);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace bt

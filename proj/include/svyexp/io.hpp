#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "svyexp/core_model.hpp"

namespace svyexp {

// Comma-separated table with a header row. Quoted fields ("a,b", "say ""hi""")
// are supported. Rows keep their 1-based source line so errors can point at
// the file. Rows whose field count differs from the header are kept and
// reported by `ragged()`.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

class CsvTable {
 public:
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  // Throws kParse when the column is absent.
  std::size_t index_of(std::string_view name) const;
  bool has_column(std::string_view name) const;
  bool ragged(const CsvRow& row) const { return row.fields.size() != header.size(); }
};

// Throws kParse on an empty input, an unterminated quote or duplicate header
// names; kIo when the file cannot be opened.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

struct ColumnMap {
  std::string outcome;
  std::string treatment;
  std::string weight;
  std::vector<std::string> covariates;
};

// Builds raw experiment columns from the given rows (all rows when `rows` is
// empty). Empty, "NA" and "NaN" cells become missing values, caught later by
// validate_experiment. A non-numeric outcome or weight, or a ragged row,
// throws kParse. Treatment cells other than "0" or "1" are passed on as 2 so
// validation reports kNonBinaryTreatment.
ExperimentColumns extract_columns(const CsvTable& table, const ColumnMap& map,
                                  const std::vector<std::size_t>& rows = {});

// Shortest decimal text that parses back to exactly `x`.
std::string format_double(double x);
// Parses a full numeric cell; nullopt when the text is not a number.
std::optional<double> parse_double(std::string_view text);

// Quotes fields containing separators, quotes or newlines.
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

// FNV-1a 64-bit digest, rendered as 16 hex digits.
std::string content_digest(std::string_view bytes);

// Key-value configuration with [section] headers and `key = value` lines;
// '#' and ';' start comments. Keys are stored as "section.key".
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source_name);
  static Config load(const std::string& path);

  // "section.key=value"; throws kConfig when malformed.
  void apply_override(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  // Typed accessors throw kConfig naming the key (and line, when known).
  std::optional<double> get_double(const std::string& key) const;
  std::optional<long long> get_int(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Throws kConfig for any key not in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;

 private:
  std::string where(const std::string& key) const;

  std::string source_;
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
};

}  // namespace svyexp

#include "svyexp/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "svyexp/error.hpp"

namespace svyexp {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_missing_token(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "na";
}

// Splits one logical record starting at `line`; pulls further physical lines
// from `in` while a quoted field is open.
std::vector<std::string> split_record(std::string line, std::istream& in,
                                      std::size_t& line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  const std::size_t start = line_no;
  for (;;) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cur.push_back('"');
            ++i;
          } else {
            quoted = false;
          }
        } else {
          cur.push_back(c);
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(trim(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!quoted) break;
    if (!std::getline(in, line)) {
      throw Error(ErrorCode::kParse,
                  "unterminated quoted field starting on line " + std::to_string(start));
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    cur.push_back('\n');
  }
  fields.push_back(trim(cur));
  return fields;
}

double cell_number(const CsvTable& table, const CsvRow& row, std::size_t col,
                   bool missing_ok) {
  const std::string& text = row.fields[col];
  if (is_missing_token(text)) {
    if (missing_ok) return std::numeric_limits<double>::quiet_NaN();
  }
  auto v = parse_double(text);
  if (!v) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(row.line) + ", column '" +
                                       table.header[col] + "': '" + text +
                                       "' is not a number");
  }
  return *v;
}

}  // namespace

std::size_t CsvTable::index_of(std::string_view name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw Error(ErrorCode::kParse, "missing column '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header && line_no == 1 && line.size() >= 3 &&
        line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (trim(line).empty()) continue;
    const std::size_t first = line_no;
    std::vector<std::string> fields = split_record(line, in, line_no);
    if (!have_header) {
      std::set<std::string> seen;
      for (const auto& f : fields) {
        if (f.empty()) throw Error(ErrorCode::kParse, "empty column name in header");
        if (!seen.insert(f).second) {
          throw Error(ErrorCode::kParse, "duplicate column '" + f + "'");
        }
      }
      table.header = std::move(fields);
      have_header = true;
    } else {
      table.rows.push_back(CsvRow{first, std::move(fields)});
    }
  }
  if (!have_header) throw Error(ErrorCode::kParse, "input has no header row");
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  return parse_csv(in);
}

ExperimentColumns extract_columns(const CsvTable& table, const ColumnMap& map,
                                  const std::vector<std::size_t>& rows) {
  const std::size_t iy = table.index_of(map.outcome);
  const std::size_t it = table.index_of(map.treatment);
  const std::size_t iw = table.index_of(map.weight);
  std::vector<std::size_t> icov;
  for (const auto& c : map.covariates) icov.push_back(table.index_of(c));

  std::vector<std::size_t> selected = rows;
  if (selected.empty()) {
    selected.resize(table.rows.size());
    for (std::size_t i = 0; i < selected.size(); ++i) selected[i] = i;
  }

  ExperimentColumns out;
  for (const auto& c : map.covariates) out.covariates[c];
  for (std::size_t r : selected) {
    const CsvRow& row = table.rows.at(r);
    if (table.ragged(row)) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(row.line) + " has " +
                                         std::to_string(row.fields.size()) +
                                         " fields, expected " +
                                         std::to_string(table.header.size()));
    }
    out.y.push_back(cell_number(table, row, iy, true));
    out.w.push_back(cell_number(table, row, iw, true));
    const std::string& t = row.fields[it];
    if (is_missing_token(t)) {
      throw Error(ErrorCode::kMissingValue,
                  "missing treatment on line " + std::to_string(row.line));
    }
    out.t.push_back(t == "1" ? 1 : t == "0" ? 0 : 2);
    for (std::size_t k = 0; k < icov.size(); ++k) {
      const std::string& v = row.fields[icov[k]];
      out.covariates[map.covariates[k]].push_back(is_missing_token(v) ? std::string() : v);
    }
  }
  return out;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
  std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  double v = 0.0;
  auto res = std::from_chars(begin, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n\r") == std::string::npos) {
      out << f;
      continue;
    }
    out << '"';
    for (char c : f) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  }
  out << '\n';
}

std::string content_digest(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Config Config::parse(std::istream& in, const std::string& source_name) {
  Config cfg;
  cfg.source_ = source_name;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::kConfig, source_name + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find_first_of("#;");
    std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') fail("unterminated section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      if (section.empty()) fail("empty section name");
      continue;
    }
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) fail("empty key");
    if (section.empty()) fail("key '" + key + "' appears before any [section]");
    const std::string full = section + "." + key;
    if (cfg.values_.count(full)) fail("duplicate key '" + full + "'");
    cfg.values_[full] = value;
    cfg.lines_[full] = line_no;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path + "'");
  return parse(in, path);
}

void Config::apply_override(std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::kConfig,
                "override '" + std::string(assignment) + "' is not section.key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (key.find('.') == std::string::npos || key.front() == '.' || key.back() == '.') {
    throw Error(ErrorCode::kConfig, "override key '" + key + "' is not section.key");
  }
  set(key, trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  lines_.erase(key);
}

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::where(const std::string& key) const {
  auto it = lines_.find(key);
  if (it == lines_.end()) return "override '" + key + "'";
  return source_ + ":" + std::to_string(it->second) + ": '" + key + "'";
}

std::optional<double> Config::get_double(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  auto d = parse_double(*v);
  if (!d) throw Error(ErrorCode::kConfig, where(key) + " expects a number, got '" + *v + "'");
  return d;
}

std::optional<long long> Config::get_int(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  long long out = 0;
  auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size()) {
    throw Error(ErrorCode::kConfig, where(key) + " expects an integer, got '" + *v + "'");
  }
  return out;
}

std::optional<bool> Config::get_bool(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw Error(ErrorCode::kConfig, where(key) + " expects true/false, got '" + *v + "'");
}

void Config::require_known(const std::vector<std::string>& allowed) const {
  for (const auto& [key, value] : values_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::kConfig, where(key) + " is not a known setting");
    }
  }
}

}  // namespace svyexp

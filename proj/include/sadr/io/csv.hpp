#pragma once

// Minimal RFC 4180 reader/writer: header row, comma separator, double-quoted
// fields with "" escapes, CRLF or LF line ends.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace sadr::io {

class CsvTable {
 public:
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> columns;  // column-major

  std::size_t rows() const { return columns.empty() ? 0 : columns[0].size(); }
  std::size_t cols() const { return header.size(); }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("column '" + name + "' not found");
    return it->second;
  }
  const std::vector<std::string>& text(const std::string& name) const { return columns[index(name)]; }

  /// Column parsed as doubles; empty cells and NA read as NaN.
  std::vector<double> numeric(const std::string& name) const {
    const auto& col = text(name);
    std::vector<double> out(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) out[i] = parse(col[i], name, i);
    return out;
  }

  void add_column(std::string name, std::vector<std::string> values) {
    if (!columns.empty() && values.size() != rows()) throw std::invalid_argument("column length mismatch");
    if (has(name)) throw std::invalid_argument("duplicate column '" + name + "'");
    index_[name] = header.size();
    header.push_back(std::move(name));
    columns.push_back(std::move(values));
  }
  void set_column(const std::string& name, std::vector<std::string> values) {
    if (values.size() != rows()) throw std::invalid_argument("column length mismatch");
    columns[index(name)] = std::move(values);
  }

  void reindex() {
    index_.clear();
    for (std::size_t j = 0; j < header.size(); ++j)
      if (!index_.emplace(header[j], j).second) throw std::invalid_argument("duplicate column '" + header[j] + "'");
  }

 private:
  static double parse(const std::string& s, const std::string& name, std::size_t row) {
    if (s.empty() || s == "NA" || s == "NaN" || s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    if (b < e && *b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, v);
    while (ptr < e && *ptr == ' ') ++ptr;
    if (ec != std::errc() || ptr != e)
      throw std::invalid_argument("column '" + name + "', row " + std::to_string(row + 1) + ": not a number: '" + s + "'");
    return v;
  }

  std::map<std::string, std::size_t> index_;
};

namespace detail {

/// Splits one record; returns false at end of input. Quoted fields may span lines.
inline bool read_record(std::istream& in, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool quoted = false, any = false, was_quoted = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      break;
    } else {
      field += c;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quoted CSV field");
  if (!any) return false;
  out.push_back(std::move(field));
  return true;
}

inline bool needs_quotes(std::string_view s) { return s.find_first_of(",\"\r\n") != std::string_view::npos; }

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::vector<std::string> rec;
  if (!detail::read_record(in, rec)) throw std::invalid_argument("empty CSV input");
  if (!rec.empty() && rec[0].starts_with("\xEF\xBB\xBF")) rec[0].erase(0, 3);
  t.header = rec;
  t.columns.assign(rec.size(), {});
  t.reindex();
  std::size_t line = 1;
  while (detail::read_record(in, rec)) {
    ++line;
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != t.header.size())
      throw std::invalid_argument("CSV record " + std::to_string(line) + " has " + std::to_string(rec.size()) +
                                  " fields, expected " + std::to_string(t.header.size()));
    for (std::size_t j = 0; j < rec.size(); ++j) t.columns[j].push_back(std::move(rec[j]));
  }
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_csv(in);
}

inline void write_field(std::ostream& os, std::string_view s) {
  if (!detail::needs_quotes(s)) {
    os << s;
    return;
  }
  os << '"';
  for (char c : s) {
    if (c == '"') os << '"';
    os << c;
  }
  os << '"';
}

inline void write_csv(std::ostream& os, const CsvTable& t) {
  for (std::size_t j = 0; j < t.cols(); ++j) {
    if (j) os << ',';
    write_field(os, t.header[j]);
  }
  os << '\n';
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (j) os << ',';
      write_field(os, t.columns[j][i]);
    }
    os << '\n';
  }
}

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(out, t);
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace sadr::io

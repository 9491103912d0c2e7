#include "besov/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace besov {
namespace {

// RFC-4180 subset: comma separator, optional double-quoted fields with "" escapes,
// no embedded newlines.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no,
                                        const std::string& source) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) {
    throw InputError(source + ": unterminated quote on line " + std::to_string(line_no));
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_real(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

struct CsvRows {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvRows read_csv(std::istream& in, const std::string& source) {
  CsvRows out;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, line_no, source);
    if (!have_header) {
      for (auto& f : fields) f = trim(f);
      out.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != out.header.size()) {
      throw InputError(source + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, header has " +
                       std::to_string(out.header.size()));
    }
    out.rows.push_back(std::move(fields));
    out.line_numbers.push_back(line_no);
  }
  if (!have_header) throw InputError(source + ": missing header row");
  return out;
}

std::size_t resolve_column(const CsvRows& csv, const LabelColumn& column,
                           const std::string& source) {
  const auto ncols = static_cast<long>(csv.header.size());
  if (const auto* name = std::get_if<std::string>(&column)) {
    for (long c = 0; c < ncols; ++c) {
      if (csv.header[static_cast<std::size_t>(c)] == *name) return static_cast<std::size_t>(c);
    }
    throw InputError(source + ": label column '" + *name + "' not found in header");
  }
  long idx = std::get<long>(column);
  if (idx < 0) idx += ncols;
  if (idx < 0 || idx >= ncols) {
    throw InputError(source + ": label column index " + std::to_string(std::get<long>(column)) +
                     " out of range for " + std::to_string(ncols) + " columns");
  }
  return static_cast<std::size_t>(idx);
}

[[noreturn]] void bad_cell(const std::string& source, std::size_t row, std::size_t line,
                           const std::string& column, const std::string& text) {
  throw InputError(source + ": non-numeric value '" + text + "' at row " + std::to_string(row) +
                   " (line " + std::to_string(line) + "), column '" + column + "'");
}

}  // namespace

LabelColumn parse_label_column(const std::string& text) {
  long idx = 0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, idx);
  if (!text.empty() && ec == std::errc{} && ptr == end) return idx;
  return text;
}

RawTable read_table(std::istream& in, const LabelColumn& label_column, LabelMode mode,
                    const std::string& source) {
  const CsvRows csv = read_csv(in, source);
  const std::size_t label_col = resolve_column(csv, label_column, source);

  RawTable table;
  table.label_mode = mode;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (c != label_col) table.feature_names.push_back(csv.header[c]);
  }

  const auto nrows = static_cast<Eigen::Index>(csv.rows.size());
  const auto nfeat = static_cast<Eigen::Index>(table.feature_names.size());
  table.values.resize(nrows, nfeat);
  if (mode == LabelMode::regression) table.responses.resize(nrows);

  std::unordered_map<std::string, int> class_index;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& fields = csv.rows[r];
    Eigen::Index f = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_col) continue;
      double value = 0.0;
      if (!parse_real(fields[c], value)) {
        bad_cell(source, r + 1, csv.line_numbers[r], csv.header[c], fields[c]);
      }
      table.values(static_cast<Eigen::Index>(r), f++) = value;
    }
    const std::string label = trim(fields[label_col]);
    if (mode == LabelMode::classification) {
      if (label.empty()) {
        throw InputError(source + ": empty label at row " + std::to_string(r + 1) + " (line " +
                         std::to_string(csv.line_numbers[r]) + ")");
      }
      auto [it, inserted] = class_index.try_emplace(label, static_cast<int>(class_index.size()));
      if (inserted) table.class_names.push_back(label);
      table.class_ids.push_back(it->second);
    } else {
      double value = 0.0;
      if (!parse_real(label, value)) {
        bad_cell(source, r + 1, csv.line_numbers[r], csv.header[label_col], label);
      }
      table.responses(static_cast<Eigen::Index>(r)) = value;
    }
  }
  return table;
}

RawTable load_table(const std::filesystem::path& path, const LabelColumn& label_column,
                    LabelMode mode) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_table(in, label_column, mode, path.string());
}

MatrixXd read_feature_matrix(const std::filesystem::path& path, std::vector<std::string>* names) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  const std::string source = path.string();
  const CsvRows csv = read_csv(in, source);
  MatrixXd values(static_cast<Eigen::Index>(csv.rows.size()),
                  static_cast<Eigen::Index>(csv.header.size()));
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    for (std::size_t c = 0; c < csv.header.size(); ++c) {
      double value = 0.0;
      if (!parse_real(csv.rows[r][c], value)) {
        bad_cell(source, r + 1, csv.line_numbers[r], csv.header[c], csv.rows[r][c]);
      }
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = value;
    }
  }
  if (names) *names = csv.header;
  return values;
}

}  // namespace besov

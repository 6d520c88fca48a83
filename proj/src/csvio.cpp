#include "balancelab/csvio.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <iterator>
#include <set>
#include <sstream>

namespace balancelab {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    return std::nullopt;
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

// Parse one attribute value; returns the stored double or raises a DataError
// locating the cell.
double parse_cell(const std::string& raw, const AttributeSpec& attr,
                  const std::string& source, std::size_t line) {
  switch (attr.kind) {
    case AttrKind::binary: {
      if (raw == "0") return 0.0;
      if (raw == "1") return 1.0;
      if (attr.levels.size() == 2) {
        if (raw == attr.levels[0]) return 0.0;
        if (raw == attr.levels[1]) return 1.0;
      }
      throw DataError(source, line,
                      "column '" + attr.name + "': expected a binary value, got '" +
                          raw + "'");
    }
    case AttrKind::categorical: {
      for (std::size_t l = 0; l < attr.levels.size(); ++l)
        if (raw == attr.levels[l]) return static_cast<double>(l);
      throw DataError(source, line,
                      "column '" + attr.name + "': unknown level '" + raw + "'");
    }
    case AttrKind::ordinal:
    case AttrKind::numeric: {
      auto v = parse_number(raw);
      if (!v)
        throw DataError(source, line,
                        "column '" + attr.name + "': unparseable value '" + raw + "'");
      return *v;
    }
  }
  throw DataError(source, line, "column '" + attr.name + "': unknown kind");
}

}  // namespace

CsvTable read_csv(std::istream& in, const std::string& source_name) {
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CsvTable table;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;  // a quoted empty field still counts as content
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  auto end_record = [&] {
    const bool blank = fields.empty() && field.empty() && !field_quoted;
    if (!blank) {
      end_field();
      if (table.header.empty()) {
        table.header = std::move(fields);
      } else {
        if (fields.size() != table.header.size())
          throw DataError(source_name, record_line,
                          "expected " + std::to_string(table.header.size()) +
                              " fields, got " + std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
        table.row_lines.push_back(record_line);
      }
      fields.clear();
    }
    record_line = line;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;  // bare or CRLF carriage returns are ignored
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes)
    throw DataError(source_name, record_line, "unterminated quoted field");
  end_record();  // file without trailing newline
  if (table.header.empty())
    throw DataError(source_name, 1, "empty file: a header row is required");
  return table;
}

std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

Schema parse_schema(std::istream& in, const std::string& source_name) {
  std::vector<AttributeSpec> attrs;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;

    std::istringstream tokens(text);
    std::string name, kind_word;
    tokens >> name >> kind_word;
    if (kind_word.empty())
      throw DataError(source_name, line, "expected '<name> <kind> [options...]'");
    const auto kind = attr_kind_from_string(kind_word);
    if (!kind)
      throw DataError(source_name, line, "unknown attribute kind '" + kind_word + "'");

    AttributeSpec attr;
    attr.name = name;
    attr.kind = *kind;
    std::string option;
    while (tokens >> option) {
      const std::size_t eq = option.find('=');
      if (eq == std::string::npos)
        throw DataError(source_name, line, "malformed option '" + option + "'");
      const std::string key = option.substr(0, eq);
      const std::string value = option.substr(eq + 1);
      if (key == "levels") {
        attr.levels = split(value, '|');
      } else if (key == "weight") {
        auto w = parse_number(value);
        if (!w || *w < 0.0)
          throw DataError(source_name, line, "weight must be a non-negative number");
        attr.weight = *w;
      } else if (key == "unit") {
        attr.unit_label = value;
      } else if (key == "range") {
        const std::size_t dots = value.find("..");
        auto lo = dots == std::string::npos
                      ? std::nullopt
                      : parse_number(value.substr(0, dots));
        auto hi = dots == std::string::npos
                      ? std::nullopt
                      : parse_number(value.substr(dots + 2));
        if (!lo || !hi)
          throw DataError(source_name, line, "range must look like 'lo..hi'");
        attr.range = std::make_pair(*lo, *hi);
      } else {
        throw DataError(source_name, line, "unknown option '" + key + "'");
      }
    }
    attrs.push_back(std::move(attr));
  }
  try {
    return Schema(std::move(attrs));
  } catch (const std::domain_error& e) {
    throw DataError(source_name + ": " + e.what());
  }
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file '" + path + "'");
  return parse_schema(in, path);
}

std::vector<Unit> parse_cohort(std::istream& in, const std::string& source_name,
                               const Schema& schema) {
  const CsvTable table = read_csv(in, source_name);

  std::size_t id_col = table.header.size();
  std::vector<std::size_t> attr_of_col(table.header.size(), schema.size());
  std::vector<bool> seen(schema.size(), false);
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const std::string& name = table.header[c];
    if (name == "id") {
      if (id_col != table.header.size())
        throw DataError(source_name, 1, "duplicate 'id' column");
      id_col = c;
      continue;
    }
    const auto idx = schema.index_of(name);
    if (!idx)
      throw DataError(source_name, 1, "unknown column '" + name + "'");
    if (seen[*idx])
      throw DataError(source_name, 1, "duplicate column '" + name + "'");
    seen[*idx] = true;
    attr_of_col[c] = *idx;
  }
  if (id_col == table.header.size())
    throw DataError(source_name, 1, "missing 'id' column");
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (!seen[j])
      throw DataError(source_name, 1, "missing column '" + schema.at(j).name + "'");

  std::vector<Unit> units;
  units.reserve(table.rows.size());
  std::set<std::string> ids;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::size_t line = table.row_lines[r];
    const std::vector<std::string>& row = table.rows[r];
    Unit unit;
    unit.id = row[id_col];
    if (unit.id.empty())
      throw DataError(source_name, line, "empty id");
    if (!ids.insert(unit.id).second)
      throw DataError(source_name, line, "duplicate id '" + unit.id + "'");
    unit.values.resize(schema.size());
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == id_col) continue;
      const std::size_t j = attr_of_col[c];
      unit.values[j] = parse_cell(row[c], schema.at(j), source_name, line);
    }
    units.push_back(std::move(unit));
  }
  return units;
}

std::vector<Unit> load_cohort(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cohort file '" + path + "'");
  return parse_cohort(in, path, schema);
}

Allocation parse_assignment(std::istream& in, const std::string& source_name) {
  const CsvTable table = read_csv(in, source_name);
  if (table.header.size() != 2 || table.header[0] != "id" ||
      table.header[1] != "arm")
    throw DataError(source_name, 1, "expected header 'id,arm'");
  Allocation allocation;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::size_t line = table.row_lines[r];
    const std::string& id = table.rows[r][0];
    if (id.empty()) throw DataError(source_name, line, "empty id");
    if (allocation.contains(id))
      throw DataError(source_name, line, "duplicate id '" + id + "'");
    const auto arm = arm_from_string(table.rows[r][1]);
    if (!arm)
      throw DataError(source_name, line,
                      "unknown arm '" + table.rows[r][1] + "' (use T or C)");
    allocation.assign(id, *arm);
  }
  return allocation;
}

Allocation load_assignment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open assignment file '" + path + "'");
  return parse_assignment(in, path);
}

Unit parse_unit_record(const std::string& line, const Schema& schema,
                       const std::string& source_name, std::size_t line_no) {
  const std::vector<std::string> fields = split_csv_record(line);
  if (fields.size() != schema.size() + 1)
    throw DataError(source_name, line_no,
                    "expected id plus " + std::to_string(schema.size()) +
                        " attribute values, got " + std::to_string(fields.size()) +
                        " fields");
  Unit unit;
  unit.id = fields[0];
  if (unit.id.empty()) throw DataError(source_name, line_no, "empty id");
  unit.values.reserve(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j)
    unit.values.push_back(
        parse_cell(fields[j + 1], schema.at(j), source_name, line_no));
  return unit;
}

}  // namespace balancelab

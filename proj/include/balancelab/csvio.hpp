#ifndef BALANCELAB_CSVIO_HPP
#define BALANCELAB_CSVIO_HPP

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "balancelab/cohort.hpp"

namespace balancelab {

// Malformed input data (as opposed to a numerically invalid request, which
// is std::domain_error). Carries a human-readable location.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
  DataError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what) {}
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // sized like header
  std::vector<std::size_t> row_lines;          // 1-based source line per row
};

// RFC-4180-ish reader: quoted fields, embedded commas and quotes, CRLF
// tolerated, trailing newline optional. Ragged rows raise DataError.
CsvTable read_csv(std::istream& in, const std::string& source_name);

// One CSV record (no header context), for the sequential protocol.
std::vector<std::string> split_csv_record(const std::string& line);

// Schema sidecar: one attribute per line,
//   <name> <kind> [levels=a|b|c] [weight=W] [unit=LABEL]
// with '#' comments. Kind is binary|categorical|ordinal|numeric.
Schema load_schema(const std::string& path);
Schema parse_schema(std::istream& in, const std::string& source_name);

// Cohort CSV: header `id,<attr>,<attr>,...` listing every schema attribute
// exactly once (any column order, no extras), one row per unit. Binary
// values are 0/1 or the two declared level names; categorical values are
// declared level names; ordinal and numeric are finite numbers. Duplicate
// ids, unknown columns, missing columns and unparseable cells raise
// DataError naming the row and column.
std::vector<Unit> load_cohort(const std::string& path, const Schema& schema);
std::vector<Unit> parse_cohort(std::istream& in, const std::string& source_name,
                               const Schema& schema);

// Assignment CSV: header `id,arm`, arm is T|C (or treatment|control).
Allocation load_assignment(const std::string& path);
Allocation parse_assignment(std::istream& in, const std::string& source_name);

// Parse one unit record `id,v1,...,vm` in schema attribute order (the
// sequential protocol line format). line_no is for error messages.
Unit parse_unit_record(const std::string& line, const Schema& schema,
                       const std::string& source_name, std::size_t line_no);

}  // namespace balancelab

#endif

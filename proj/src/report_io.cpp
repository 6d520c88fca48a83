#include "balancelab/report_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace balancelab {

std::string render_number(double v) {
  if (v == std::floor(v) && std::fabs(v) < 9.007199254740992e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  // Shortest decimal form that parses back to the same double.
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> flatten_report(
    const ImbalanceReport& report) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("arm_size_treatment", std::to_string(report.arm_treatment));
  kv.emplace_back("arm_size_control", std::to_string(report.arm_control));
  for (const BinaryImbalance& b : report.binary)
    kv.emplace_back("binary." + b.factor + ".D", std::to_string(b.diff));
  for (const CategoricalImbalance& c : report.categorical) {
    for (const auto& [level, diff] : c.level_diffs)
      kv.emplace_back("categorical." + c.factor + ".diff." + level,
                      std::to_string(diff));
    kv.emplace_back("categorical." + c.factor + ".max_abs_diff",
                    std::to_string(c.max_abs_diff));
  }
  for (const OrdinalImbalance& o : report.ordinal)
    kv.emplace_back("ordinal." + o.factor + ".rank_sum_diff",
                    render_number(o.rank_sum_diff));
  for (const NumericImbalance& m : report.numeric) {
    kv.emplace_back("numeric." + m.factor + ".Q", render_number(m.mean_diff));
    kv.emplace_back("numeric." + m.factor + ".Q_std", render_number(m.standardized));
  }
  for (const InteractionCell& cell : report.interactions) {
    std::string key = "interaction.";
    for (std::size_t t = 0; t < cell.factors.size(); ++t) {
      if (t > 0) key += "|";
      key += cell.factors[t] + "=" + cell.levels[t];
    }
    key += ".D";
    kv.emplace_back(std::move(key), std::to_string(cell.diff));
  }
  return kv;
}

void write_report_csv(std::ostream& out, const ImbalanceReport& report) {
  out << "key,value\n";
  for (const auto& [key, value] : flatten_report(report))
    out << csv_escape(key) << "," << csv_escape(value) << "\n";
}

}  // namespace balancelab

#ifndef BALANCELAB_REPORT_IO_HPP
#define BALANCELAB_REPORT_IO_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "balancelab/metrics.hpp"

namespace balancelab {

// Flat key-value view of a report, e.g.
//   arm_size_treatment      2
//   binary.gender.D         0
//   categorical.site.diff.north   -1
//   categorical.site.max_abs_diff  1
//   ordinal.fitness.rank_sum_diff  1.5
//   numeric.income.Q        -2500
//   numeric.income.Q_std    -0.418
//   interaction.gender=f|age=young.D   1
// Keys are emitted in a fixed order (sizes, then factors in schema order,
// then interaction cells); values are rendered deterministically, so two
// identical reports serialize to identical bytes.
std::vector<std::pair<std::string, std::string>> flatten_report(
    const ImbalanceReport& report);

// Two-column CSV `key,value` of flatten_report.
void write_report_csv(std::ostream& out, const ImbalanceReport& report);

// Deterministic number rendering used across CSV outputs ('%.17g'-exact
// round-trip, integers without a decimal point).
std::string render_number(double v);

}  // namespace balancelab

#endif

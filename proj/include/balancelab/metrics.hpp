#ifndef BALANCELAB_METRICS_HPP
#define BALANCELAB_METRICS_HPP

#include <map>
#include <span>
#include <string>
#include <vector>

#include "balancelab/cohort.hpp"

namespace balancelab {

// Number of coordinates where two equal-length 0/1 profiles differ.
int hamming_distance(std::span<const int> a, std::span<const int> b);

// Gower similarity-derived distance for mixed attribute kinds:
//   binary/categorical: 0 if equal else 1
//   ordinal/numeric:    |a - b| / range (range taken over the cohort;
//                       zero-range attributes contribute 0)
// combined as a weighted mean. All weights zero (or an empty schema) leaves
// no defined distance and throws.
class GowerDistance {
 public:
  GowerDistance(const Schema& schema, std::vector<double> weights,
                std::vector<double> ranges);

  // Derive ranges from the cohort itself; empty weights means the schema's
  // declared per-attribute weights.
  static GowerDistance for_cohort(const Schema& schema,
                                  std::span<const Unit> units,
                                  std::vector<double> weights = {});

  double operator()(const Unit& a, const Unit& b) const;

  const std::vector<double>& ranges() const { return ranges_; }

 private:
  const Schema* schema_;
  std::vector<double> weights_;
  std::vector<double> ranges_;
  double total_weight_ = 0.0;
};

// How many units in each arm carry value 1; diff = treatment - control.
struct BinaryImbalance {
  std::string factor;
  int diff = 0;
};

struct CategoricalImbalance {
  std::string factor;
  // One entry per declared level: (level name, count_T - count_C).
  std::vector<std::pair<std::string, int>> level_diffs;
  // Scalar summary: max over levels of |count_T - count_C|.
  int max_abs_diff = 0;
};

struct OrdinalImbalance {
  std::string factor;
  // Midrank rank-sum difference between arms (ties share the average rank).
  double rank_sum_diff = 0.0;
};

struct NumericImbalance {
  std::string factor;
  double mean_diff = 0.0;    // Q = mean(T) - mean(C)
  double standardized = 0.0; // Q / sigma-hat, cohort SD; 0 when SD is 0
};

// One joint-level cell of an interaction between discrete factors.
struct InteractionCell {
  std::vector<std::string> factors;  // schema order
  std::vector<std::string> levels;   // level names, same order as factors
  int diff = 0;                      // count_T - count_C of units in the cell
};

struct ImbalanceReport {
  std::size_t arm_treatment = 0;
  std::size_t arm_control = 0;
  std::vector<BinaryImbalance> binary;
  std::vector<CategoricalImbalance> categorical;
  std::vector<OrdinalImbalance> ordinal;
  std::vector<NumericImbalance> numeric;
  // Cells for every subset of 2..interaction_order discrete factors.
  std::vector<InteractionCell> interactions;
};

// Marginal (and, for interaction_order >= 2, joint) imbalance of an
// allocation over a cohort. Every unit must be assigned; every factor in the
// schema appears exactly once in its kind's bucket. interaction_order is
// clamped nowhere: asking for more factors than the schema has discrete
// factors throws.
ImbalanceReport imbalance_report(const Schema& schema,
                                 std::span<const Unit> units,
                                 const Allocation& allocation,
                                 int interaction_order = 1);

// Per-factor comparability bound. For binary/categorical factors the bound
// is n/i (fraction-of-arm rule); for ordinal, n^2/i against the rank-sum
// difference; for numeric, l on the chosen scale of Q.
struct ComparabilityThreshold {
  // Exactly one of the two is active: fraction > 0 uses the 1/i rule,
  // otherwise `limit` bounds the statistic directly.
  int fraction = 0;      // the i in "differ by at most n/i"
  double limit = 0.0;    // direct bound on the statistic
};

struct FactorVerdict {
  std::string factor;
  double statistic = 0.0;  // |imbalance| on the factor's natural scale
  double bound = 0.0;
  bool within = true;
};

struct ComparabilityVerdict {
  bool comparable = true;
  std::vector<FactorVerdict> factors;  // one per thresholded factor
};

// Applies thresholds to a report. Factors without a threshold entry are not
// checked. Unknown factor names in `thresholds` throw. The n of the n/i rule
// is the mean arm size recorded in the report.
ComparabilityVerdict is_comparable(
    const Schema& schema, const ImbalanceReport& report,
    const std::map<std::string, ComparabilityThreshold>& thresholds);

}  // namespace balancelab

#endif

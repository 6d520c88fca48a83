#ifndef BALANCELAB_ALLOCATION_HPP
#define BALANCELAB_ALLOCATION_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "balancelab/cohort.hpp"
#include "balancelab/metrics.hpp"
#include "balancelab/rng.hpp"

namespace balancelab {

enum class StrategyKind { complete_random, matched_pairs, minimization, systematic };

std::string to_string(StrategyKind kind);
std::optional<StrategyKind> strategy_kind_from_string(std::string_view s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::complete_random;
  // Balancing weights by factor name. Empty means every eligible factor of
  // the strategy gets weight 1. Unknown names or negative weights throw.
  std::map<std::string, double> weights;
  // Minimization: probability of assigning to the score-minimizing arm.
  double biased_coin = 1.0;
  // Minimization: weight of the implicit arm-size factor.
  double size_weight = 1.0;
  // Systematic: cap on improving swaps applied by the local search.
  int budget = 1000;
};

// Uniform random permutation of the cohort; first half treatment. Odd
// cohorts put the extra unit in control.
Allocation complete_randomization(std::span<const Unit> units, RandomSource& rng);

struct PairedAllocation {
  Allocation allocation;
  // Pairs in the order they were formed; each pair (a, b) has a < b by id.
  std::vector<std::pair<std::string, std::string>> pairs;
  double total_distance = 0.0;
};

// Greedy nearest-neighbour pairing by Gower distance: repeatedly take the
// unpaired unit with the lowest id, pair it with its nearest unpaired
// neighbour (ties to the lowest id), then split each pair by a fair coin.
// Odd cohorts throw: pairs need an even count.
PairedAllocation matched_pair_allocation(std::span<const Unit> units,
                                         const GowerDistance& distance,
                                         RandomSource& rng);

// Sequential minimization over the discrete factors (binary/categorical).
// For each arm the score is
//   sum_f w_f * |count_arm(f, level) - count_other(f, level)|  (after adding
//   the unit to that arm) + size_weight * |size_arm - size_other|
// and the unit goes to the lower-score arm with probability biased_coin
// (exact ties: fair coin).
class MinimizationState {
 public:
  MinimizationState(const Schema& schema, const StrategyConfig& config);

  Arm allocate(const Unit& unit, RandomSource& rng);
  // Fold a unit whose arm was decided elsewhere into the running counts.
  void record(const Unit& unit, Arm arm);

  std::size_t arm_size(Arm arm) const;
  // Count of units with the given level of a discrete factor in an arm.
  std::size_t level_count(Arm arm, std::size_t attr, int level) const;

 private:
  double score_if_assigned(const Unit& unit, Arm arm) const;

  const Schema* schema_;
  std::vector<double> weights_;         // per schema attribute; 0 = ignored
  double biased_coin_;
  double size_weight_;
  std::vector<std::size_t> discrete_;   // attribute indices with weight > 0
  // counts_[arm][k][level] for the k-th balanced attribute
  std::vector<std::vector<std::size_t>> counts_[2];
  std::size_t sizes_[2] = {0, 0};
};

// Balanced split search: seeded random equal split, then best-improvement
// single-swap local search on the weighted imbalance objective
//   binary: |D|; categorical: max_l |diff_l|; ordinal: |rank-sum diff| / n^2;
//   numeric: |Q| / sigma-hat (cohort SD; zero-SD factors contribute 0).
// Ties between equally good swaps resolve to the lexicographically lowest
// (treatment id, control id) pair. Stops at a local optimum or after
// `budget` applied swaps.
Allocation systematic_split(std::span<const Unit> units, const Schema& schema,
                            const std::map<std::string, double>& weights,
                            int budget, std::uint64_t seed);

// The objective systematic_split minimizes, exposed for verification.
double split_objective(const Schema& schema, std::span<const Unit> units,
                       const Allocation& allocation,
                       const std::map<std::string, double>& weights);

// Dispatch on config.kind. `seed` feeds the strategy's own stream;
// `stream_index` derives independent streams for repeated use of one seed
// (replication index), leaving results independent of scheduling.
Allocation allocate(std::span<const Unit> units, const Schema& schema,
                    const StrategyConfig& config, std::uint64_t seed,
                    std::uint64_t stream_index = 0);

}  // namespace balancelab

#endif

#ifndef BALANCELAB_SIMULATION_HPP
#define BALANCELAB_SIMULATION_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "balancelab/allocation.hpp"
#include "balancelab/cohort.hpp"
#include "balancelab/metrics.hpp"
#include "balancelab/rng.hpp"

namespace balancelab {

struct BinaryFactorSpec {
  std::string name;
  double prevalence = 0.5;
};

// Synthetic cohort description. Binary factors are generated from a latent
// Gaussian copula: z ~ N(0, R), factor j is 1 iff z_j exceeds the quantile
// matching its prevalence. An identity R (or an empty matrix) gives
// independent factors; off-diagonal entries control dependence, including
// rho = 1 for a perfect copy. Optionally a numeric "ability" trait and an
// ordinal "rank" factor (a random permutation of 1..units) are appended.
struct PopulationSpec {
  int units = 0;  // cohort size (both arms together)
  std::vector<BinaryFactorSpec> factors;
  // Symmetric positive semidefinite, factors.size() square; empty = identity.
  std::vector<std::vector<double>> latent_correlation;
  std::optional<std::pair<double, double>> ability;  // mean, sd
  bool rank_factor = false;

  Schema make_schema() const;
  // Throws std::domain_error on invalid sizes, prevalences outside [0, 1],
  // or a correlation matrix that is not symmetric PSD with unit diagonal.
  void validate() const;
};

std::vector<Unit> generate_population(const PopulationSpec& population,
                                      RandomSource& rng);

struct FactorStats {
  std::string factor;
  double comparable_rate = 0.0;  // fraction of replications within bound
  double mean_abs_imbalance = 0.0;
  double mean_signed_imbalance = 0.0;
};

struct SimulationResult {
  std::uint64_t seed = 0;
  int replications = 0;
  double all_comparable_rate = 0.0;  // every thresholded factor within bound
  double standard_error = 0.0;       // sqrt(q(1-q)/R) of the joint rate
  std::vector<FactorStats> factors;  // one per thresholded factor
  double mean_arm_size_diff = 0.0;   // mean |#T - #C| over replications
};

// Monte Carlo estimate of comparability rates: R replications of generate ->
// allocate -> report -> threshold check. Streams are derived from (seed,
// replication, purpose), so the result is byte-identical for every `jobs`
// value and for repeated runs with the same seed.
SimulationResult run_replications(
    const PopulationSpec& population, const StrategyConfig& strategy,
    const std::map<std::string, ComparabilityThreshold>& thresholds,
    int replications, std::uint64_t seed, int jobs = 1);

enum class DependenceClass { benign, neutral, malign };

std::string to_string(DependenceClass c);

struct FactorComparison {
  std::string factor;
  double mean_systematic = 0.0;  // mean |imbalance| under the balanced split
  double mean_randomized = 0.0;  // mean |imbalance| under randomization
  double diff_se = 0.0;          // SE of the paired mean difference
  DependenceClass cls = DependenceClass::neutral;
};

struct StrategyComparison {
  std::uint64_t seed = 0;
  int replications = 0;
  std::string observed;
  FactorComparison observed_factor;
  std::vector<FactorComparison> unobserved;
};

// Paired comparison of systematic balanced splitting on one observed factor
// against complete randomization, replication by replication on identical
// cohorts. Each unobserved factor is classified by the paired mean
// difference mean_S - mean_R against a 3-standard-error band: below the band
// benign, above malign, inside neutral. The observed factor must exist and
// must be binary; the systematic objective uses weight 1 on it alone.
StrategyComparison compare_strategies(const PopulationSpec& population,
                                      const std::string& observed_factor,
                                      int budget, int replications,
                                      std::uint64_t seed, int jobs = 1);

}  // namespace balancelab

#endif

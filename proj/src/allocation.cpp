#include "balancelab/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace balancelab {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::complete_random: return "complete-random";
    case StrategyKind::matched_pairs: return "matched-pairs";
    case StrategyKind::minimization: return "minimization";
    case StrategyKind::systematic: return "systematic";
  }
  return "?";
}

std::optional<StrategyKind> strategy_kind_from_string(std::string_view s) {
  if (s == "complete-random" || s == "complete_random" || s == "random")
    return StrategyKind::complete_random;
  if (s == "matched-pairs" || s == "matched_pairs" || s == "pairs")
    return StrategyKind::matched_pairs;
  if (s == "minimization") return StrategyKind::minimization;
  if (s == "systematic") return StrategyKind::systematic;
  return std::nullopt;
}

namespace {

// Per-attribute weights for a strategy: an empty override means the schema's
// declared weights; a non-empty override is a complete specification (named
// factors get their value, everything else 0).
std::vector<double> resolve_weights(const Schema& schema,
                                    const std::map<std::string, double>& override_weights) {
  std::vector<double> w;
  w.reserve(schema.size());
  if (override_weights.empty()) {
    for (const AttributeSpec& a : schema.attributes()) w.push_back(a.weight);
    return w;
  }
  w.assign(schema.size(), 0.0);
  for (const auto& [name, value] : override_weights) {
    auto idx = schema.index_of(name);
    if (!idx)
      throw std::domain_error("weights: unknown factor '" + name + "'");
    if (!(value >= 0.0) || !std::isfinite(value))
      throw std::domain_error("weights: factor '" + name +
                              "' must have a non-negative weight");
    w[*idx] = value;
  }
  return w;
}

void require_unique_ids(std::span<const Unit> units, const Allocation& allocation) {
  if (allocation.size() != units.size())
    throw std::domain_error("allocation: duplicate unit ids in cohort");
}

}  // namespace

Allocation complete_randomization(std::span<const Unit> units, RandomSource& rng) {
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  Allocation allocation;
  const std::size_t half = units.size() / 2;
  for (std::size_t i = 0; i < order.size(); ++i)
    allocation.assign(units[order[i]].id,
                      i < half ? Arm::treatment : Arm::control);
  require_unique_ids(units, allocation);
  return allocation;
}

PairedAllocation matched_pair_allocation(std::span<const Unit> units,
                                         const GowerDistance& distance,
                                         RandomSource& rng) {
  if (units.size() % 2 != 0)
    throw std::domain_error("matched pairs: cohort size must be even");
  PairedAllocation result;
  if (units.empty()) return result;

  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return units[a].id < units[b].id;
  });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (units[order[i - 1]].id == units[order[i]].id)
      throw std::domain_error("matched pairs: duplicate unit id '" +
                              units[order[i]].id + "'");

  std::vector<bool> paired(units.size(), false);
  for (std::size_t ai = 0; ai < order.size(); ++ai) {
    const std::size_t a = order[ai];
    if (paired[a]) continue;
    paired[a] = true;
    // Nearest unpaired neighbour; id order of the scan makes ties land on
    // the lowest id.
    std::size_t best = order.size();
    double best_d = 0.0;
    for (std::size_t bi = ai + 1; bi < order.size(); ++bi) {
      const std::size_t b = order[bi];
      if (paired[b]) continue;
      const double d = distance(units[a], units[b]);
      if (best == order.size() || d < best_d) {
        best = b;
        best_d = d;
      }
    }
    paired[best] = true;
    result.pairs.emplace_back(units[a].id, units[best].id);
    result.total_distance += best_d;
    const bool a_treated = rng.bernoulli(0.5);
    result.allocation.assign(units[a].id,
                             a_treated ? Arm::treatment : Arm::control);
    result.allocation.assign(units[best].id,
                             a_treated ? Arm::control : Arm::treatment);
  }
  return result;
}

MinimizationState::MinimizationState(const Schema& schema, const StrategyConfig& config)
    : schema_(&schema),
      biased_coin_(config.biased_coin),
      size_weight_(config.size_weight) {
  if (!(biased_coin_ >= 0.5 && biased_coin_ <= 1.0))
    throw std::domain_error("minimization: biased coin must lie in [0.5, 1]");
  if (!(size_weight_ >= 0.0))
    throw std::domain_error("minimization: size weight must be non-negative");
  weights_ = resolve_weights(schema, config.weights);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const AttrKind kind = schema.at(j).kind;
    const bool discrete = kind == AttrKind::binary || kind == AttrKind::categorical;
    if (!discrete) {
      if (!config.weights.empty() && weights_[j] > 0.0)
        throw std::domain_error("minimization: factor '" + schema.at(j).name +
                                "' is not discrete and cannot be balanced");
      weights_[j] = 0.0;
      continue;
    }
    if (weights_[j] > 0.0) {
      discrete_.push_back(j);
      counts_[0].emplace_back(schema.level_count(j), 0);
      counts_[1].emplace_back(schema.level_count(j), 0);
    }
  }
}

double MinimizationState::score_if_assigned(const Unit& unit, Arm arm) const {
  const std::size_t a = arm == Arm::treatment ? 0 : 1;
  const std::size_t o = 1 - a;
  double score = 0.0;
  for (std::size_t k = 0; k < discrete_.size(); ++k) {
    const std::size_t j = discrete_[k];
    const double v = unit.values[j];
    if (v != std::floor(v) || v < 0.0 ||
        static_cast<std::size_t>(v) >= counts_[a][k].size())
      throw std::domain_error("minimization: unit '" + unit.id +
                              "' has an unknown level for factor '" +
                              schema_->at(j).name + "'");
    const auto lv = static_cast<std::size_t>(v);
    const double after = static_cast<double>(counts_[a][k][lv] + 1);
    const double other = static_cast<double>(counts_[o][k][lv]);
    score += weights_[j] * std::fabs(after - other);
  }
  const double size_after = static_cast<double>(sizes_[a] + 1);
  const double size_other = static_cast<double>(sizes_[o]);
  score += size_weight_ * std::fabs(size_after - size_other);
  return score;
}

Arm MinimizationState::allocate(const Unit& unit, RandomSource& rng) {
  if (unit.values.size() != schema_->size())
    throw std::domain_error("minimization: unit '" + unit.id +
                            "' does not match the schema");
  const double s_t = score_if_assigned(unit, Arm::treatment);
  const double s_c = score_if_assigned(unit, Arm::control);
  Arm chosen;
  if (s_t == s_c) {
    chosen = rng.bernoulli(0.5) ? Arm::treatment : Arm::control;
  } else {
    const Arm minimizer = s_t < s_c ? Arm::treatment : Arm::control;
    chosen = minimizer;
    if (biased_coin_ < 1.0 && !rng.bernoulli(biased_coin_))
      chosen = other_arm(minimizer);
  }
  record(unit, chosen);
  return chosen;
}

void MinimizationState::record(const Unit& unit, Arm arm) {
  if (unit.values.size() != schema_->size())
    throw std::domain_error("minimization: unit '" + unit.id +
                            "' does not match the schema");
  // Validates the levels as a side effect.
  (void)score_if_assigned(unit, arm);
  const std::size_t a = arm == Arm::treatment ? 0 : 1;
  for (std::size_t k = 0; k < discrete_.size(); ++k)
    counts_[a][k][static_cast<std::size_t>(unit.values[discrete_[k]])]++;
  sizes_[a]++;
}

std::size_t MinimizationState::arm_size(Arm arm) const {
  return sizes_[arm == Arm::treatment ? 0 : 1];
}

std::size_t MinimizationState::level_count(Arm arm, std::size_t attr, int level) const {
  for (std::size_t k = 0; k < discrete_.size(); ++k)
    if (discrete_[k] == attr)
      return counts_[arm == Arm::treatment ? 0 : 1][k][static_cast<std::size_t>(level)];
  throw std::domain_error("minimization: attribute is not balanced");
}

namespace {

// Shared evaluation machinery for the systematic split objective:
//   sum_f w_f * t_f  with  t_f = |D| (binary), max_l |diff_l| (categorical),
//   |rank-sum diff| / n^2 (ordinal), |Q| / sd (numeric, 0 when sd = 0).
// State is kept as per-arm aggregates so a candidate swap evaluates in
// O(active factors) instead of O(cohort).
class SplitObjective {
 public:
  SplitObjective(const Schema& schema, std::span<const Unit> units,
                 const std::map<std::string, double>& weights)
      : units_(units) {
    validate_units(schema, units);
    const std::vector<double> w = resolve_weights(schema, weights);
    const double n_arm = static_cast<double>(units.size()) / 2.0;
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (w[j] == 0.0) continue;
      Factor f;
      f.weight = w[j];
      f.kind = schema.at(j).kind;
      f.values.resize(units.size());
      switch (f.kind) {
        case AttrKind::binary:
        case AttrKind::categorical:
          f.levels = schema.level_count(j);
          for (std::size_t u = 0; u < units.size(); ++u)
            f.values[u] = units[u].values[j];
          break;
        case AttrKind::ordinal: {
          // midranks over the whole cohort
          std::vector<std::size_t> order(units.size());
          std::iota(order.begin(), order.end(), std::size_t{0});
          std::stable_sort(order.begin(), order.end(),
                           [&](std::size_t x, std::size_t y) {
                             return units[x].values[j] < units[y].values[j];
                           });
          std::size_t i = 0;
          while (i < order.size()) {
            std::size_t k = i;
            while (k + 1 < order.size() &&
                   units[order[k + 1]].values[j] == units[order[i]].values[j])
              ++k;
            const double shared = 0.5 * (static_cast<double>(i + 1) +
                                         static_cast<double>(k + 1));
            for (std::size_t t = i; t <= k; ++t) f.values[order[t]] = shared;
            i = k + 1;
          }
          f.scale = n_arm * n_arm;
          break;
        }
        case AttrKind::numeric: {
          double sum = 0.0, sum_sq = 0.0;
          for (std::size_t u = 0; u < units.size(); ++u) {
            f.values[u] = units[u].values[j];
            sum += f.values[u];
            sum_sq += f.values[u] * f.values[u];
          }
          const double n = static_cast<double>(units.size());
          const double mean = sum / n;
          const double sd = std::sqrt(std::max(0.0, sum_sq / n - mean * mean));
          // |Q| / sd = |sum_T - sum_C| / (n_arm * sd)
          f.scale = sd > 0.0 ? n_arm * sd : 0.0;
          break;
        }
      }
      factors_.push_back(std::move(f));
    }
  }

  bool empty() const { return factors_.empty(); }

  // (Re)build aggregates for a treatment-membership mask.
  void reset(const std::vector<bool>& in_treatment) {
    for (Factor& f : factors_) {
      if (f.kind == AttrKind::binary || f.kind == AttrKind::categorical) {
        f.diff.assign(f.levels, 0);
        for (std::size_t u = 0; u < units_.size(); ++u)
          f.diff[static_cast<std::size_t>(f.values[u])] += in_treatment[u] ? 1 : -1;
      } else {
        f.sum_diff = 0.0;
        for (std::size_t u = 0; u < units_.size(); ++u)
          f.sum_diff += in_treatment[u] ? f.values[u] : -f.values[u];
      }
    }
  }

  double objective() const {
    double total = 0.0;
    for (const Factor& f : factors_) total += f.weight * term(f, 0, 0, false);
    return total;
  }

  // Objective if treatment unit t and control unit c swapped arms.
  double objective_if_swapped(std::size_t t, std::size_t c) const {
    double total = 0.0;
    for (const Factor& f : factors_) total += f.weight * term(f, t, c, true);
    return total;
  }

  void apply_swap(std::size_t t, std::size_t c) {
    for (Factor& f : factors_) {
      if (f.kind == AttrKind::binary || f.kind == AttrKind::categorical) {
        f.diff[static_cast<std::size_t>(f.values[t])] -= 2;
        f.diff[static_cast<std::size_t>(f.values[c])] += 2;
      } else {
        f.sum_diff += 2.0 * (f.values[c] - f.values[t]);
      }
    }
  }

 private:
  struct Factor {
    double weight = 1.0;
    AttrKind kind = AttrKind::binary;
    std::size_t levels = 0;
    std::vector<double> values;  // per unit: level index, midrank, or value
    std::vector<int> diff;       // discrete: count_T - count_C per level
    double sum_diff = 0.0;       // ordinal/numeric: sum_T - sum_C
    double scale = 1.0;          // divisor; 0 marks a constant numeric factor
  };

  double term(const Factor& f, std::size_t t, std::size_t c, bool swapped) const {
    if (f.kind == AttrKind::binary || f.kind == AttrKind::categorical) {
      int worst = 0;
      for (std::size_t l = 0; l < f.levels; ++l) {
        int d = f.diff[l];
        if (swapped) {
          if (static_cast<std::size_t>(f.values[t]) == l) d -= 2;
          if (static_cast<std::size_t>(f.values[c]) == l) d += 2;
        }
        worst = std::max(worst, std::abs(d));
      }
      return static_cast<double>(worst);
    }
    if (f.scale == 0.0) return 0.0;
    double d = f.sum_diff;
    if (swapped) d += 2.0 * (f.values[c] - f.values[t]);
    return std::fabs(d) / f.scale;
  }

  std::span<const Unit> units_;
  std::vector<Factor> factors_;
};

}  // namespace

double split_objective(const Schema& schema, std::span<const Unit> units,
                       const Allocation& allocation,
                       const std::map<std::string, double>& weights) {
  SplitObjective objective(schema, units, weights);
  std::vector<bool> in_treatment(units.size());
  for (std::size_t u = 0; u < units.size(); ++u)
    in_treatment[u] = allocation.arm_of(units[u].id) == Arm::treatment;
  objective.reset(in_treatment);
  return objective.objective();
}

Allocation systematic_split(std::span<const Unit> units, const Schema& schema,
                            const std::map<std::string, double>& weights,
                            int budget, std::uint64_t seed) {
  if (units.size() % 2 != 0)
    throw std::domain_error("systematic split: cohort size must be even");
  if (budget < 0)
    throw std::domain_error("systematic split: budget must be non-negative");

  // Seeded random equal split as the starting point.
  RandomSource rng = RandomSource::for_stream(seed, 0, kStreamSystematic);
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<bool> in_treatment(units.size(), false);
  for (std::size_t i = 0; i < units.size() / 2; ++i) in_treatment[order[i]] = true;

  SplitObjective objective(schema, units, weights);
  if (!objective.empty() && !units.empty()) {
    objective.reset(in_treatment);
    double current = objective.objective();
    for (int step = 0; step < budget; ++step) {
      // Candidate scan in id order on both sides, so equally good swaps
      // resolve to the lexicographically lowest (treatment id, control id).
      std::vector<std::size_t> t_side, c_side;
      for (std::size_t u = 0; u < units.size(); ++u)
        (in_treatment[u] ? t_side : c_side).push_back(u);
      auto by_id = [&](std::size_t a, std::size_t b) {
        return units[a].id < units[b].id;
      };
      std::sort(t_side.begin(), t_side.end(), by_id);
      std::sort(c_side.begin(), c_side.end(), by_id);

      double best = current;
      std::size_t best_t = units.size(), best_c = units.size();
      for (std::size_t t : t_side) {
        for (std::size_t c : c_side) {
          const double v = objective.objective_if_swapped(t, c);
          if (v < best) {
            best = v;
            best_t = t;
            best_c = c;
          }
        }
      }
      if (best_t == units.size()) break;  // local optimum
      objective.apply_swap(best_t, best_c);
      in_treatment[best_t] = false;
      in_treatment[best_c] = true;
      current = best;
    }
  }

  Allocation allocation;
  for (std::size_t u = 0; u < units.size(); ++u)
    allocation.assign(units[u].id,
                      in_treatment[u] ? Arm::treatment : Arm::control);
  require_unique_ids(units, allocation);
  return allocation;
}

Allocation allocate(std::span<const Unit> units, const Schema& schema,
                    const StrategyConfig& config, std::uint64_t seed,
                    std::uint64_t stream_index) {
  switch (config.kind) {
    case StrategyKind::complete_random: {
      RandomSource rng = RandomSource::for_stream(seed, stream_index, kStreamAllocate);
      return complete_randomization(units, rng);
    }
    case StrategyKind::matched_pairs: {
      std::vector<double> w = resolve_weights(schema, config.weights);
      GowerDistance distance = GowerDistance::for_cohort(schema, units, std::move(w));
      RandomSource rng = RandomSource::for_stream(seed, stream_index, kStreamPairs);
      return matched_pair_allocation(units, distance, rng).allocation;
    }
    case StrategyKind::minimization: {
      MinimizationState state(schema, config);
      RandomSource rng = RandomSource::for_stream(seed, stream_index, kStreamAllocate);
      Allocation allocation;
      for (const Unit& u : units) allocation.assign(u.id, state.allocate(u, rng));
      require_unique_ids(units, allocation);
      return allocation;
    }
    case StrategyKind::systematic:
      return systematic_split(units, schema, config.weights, config.budget,
                              combine_seed(seed, stream_index));
  }
  throw std::domain_error("allocate: unknown strategy");
}

}  // namespace balancelab

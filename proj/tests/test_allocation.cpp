#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "balancelab/allocation.hpp"
#include "balancelab/metrics.hpp"
#include "balancelab/rng.hpp"

using namespace balancelab;

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

Schema mixed_schema() {
  return Schema({
      {"gender", AttrKind::categorical, {"1", "2"}},
      {"height", AttrKind::numeric, {}, 1.0, "cm", {}},
      {"marital", AttrKind::categorical, {"1", "2"}},
      {"age", AttrKind::numeric, {}, 1.0, "years", {}},
      {"income", AttrKind::numeric, {}, 1.0, "USD", {}},
      {"academic", AttrKind::binary, {}},
  });
}

std::vector<Unit> mixed_units() {
  return {
      {"T1", {0, 170, 0, 34, 50000, 1}},
      {"C1", {0, 165, 0, 30, 55000, 1}},
      {"T2", {1, 193, 1, 46, 72000, 0}},
      {"C2", {1, 188, 1, 44, 70000, 1}},
  };
}

// The four-point cohort whose x marginal can be balanced perfectly while y
// is left maximally imbalanced: (1,4), (2,2), (3,1), (4,3).
Schema xy_schema() {
  return Schema({{"x", AttrKind::numeric}, {"y", AttrKind::numeric}});
}

std::vector<Unit> xy_units() {
  return {
      {"p1", {1, 4}}, {"p2", {2, 2}}, {"p3", {3, 1}}, {"p4", {4, 3}}};
}

// Minimum-total-distance perfect matching by exhaustive recursion, feasible
// for 2n <= 12 ((2n-1)!! = 10395 matchings).
double optimal_matching_total(std::span<const Unit> units,
                              const GowerDistance& d) {
  std::vector<std::size_t> left(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) left[i] = i;
  double best = -1.0;
  std::vector<std::size_t> stack;
  auto rec = [&](auto&& self, std::vector<std::size_t>& rest, double acc) -> void {
    if (rest.empty()) {
      if (best < 0.0 || acc < best) best = acc;
      return;
    }
    const std::size_t a = rest.front();
    for (std::size_t j = 1; j < rest.size(); ++j) {
      const std::size_t b = rest[j];
      std::vector<std::size_t> next;
      for (std::size_t t = 1; t < rest.size(); ++t)
        if (t != j) next.push_back(rest[t]);
      self(self, next, acc + d(units[a], units[b]));
    }
  };
  rec(rec, left, 0.0);
  return best;
}

// Minimum of the systematic objective over every equal split, for 2n <= 12
// (C(12,6) = 924 subsets).
double optimal_split_objective(const Schema& schema, std::span<const Unit> units,
                               const std::map<std::string, double>& weights) {
  const std::size_t n2 = units.size();
  double best = -1.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n2); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != n2 / 2) continue;
    Allocation a;
    for (std::size_t u = 0; u < n2; ++u)
      a.assign(units[u].id, (mask >> u) & 1 ? Arm::treatment : Arm::control);
    const double v = split_objective(schema, units, a, weights);
    if (best < 0.0 || v < best) best = v;
  }
  return best;
}

std::vector<Unit> random_mixed_cohort(RandomSource& rng, std::size_t pairs) {
  std::vector<Unit> units;
  for (std::size_t u = 0; u < 2 * pairs; ++u)
    units.push_back({"u" + std::to_string(u),
                     {static_cast<double>(rng.below(2)),
                      static_cast<double>(rng.below(3)), rng.normal()}});
  return units;
}

Schema random_mixed_schema() {
  return Schema({
      {"flag", AttrKind::binary},
      {"group", AttrKind::categorical, {"a", "b", "c"}},
      {"score", AttrKind::numeric},
  });
}

double signed_sum(std::span<const Unit> units, const Allocation& a, std::size_t j) {
  double s = 0.0;
  for (const Unit& u : units)
    s += a.arm_of(u.id) == Arm::treatment ? u.values[j] : -u.values[j];
  return s;
}

}  // namespace

TEST_CASE("complete randomization splits evenly, extra unit to control") {
  std::vector<Unit> units;
  for (int u = 0; u < 7; ++u) units.push_back({"u" + std::to_string(u), {}});
  RandomSource rng(3);
  const Allocation odd = complete_randomization(units, rng);
  CHECK(odd.arm_size(Arm::treatment) == 3);
  CHECK(odd.arm_size(Arm::control) == 4);

  units.pop_back();
  const Allocation even = complete_randomization(units, rng);
  CHECK(even.arm_size(Arm::treatment) == 3);
  CHECK(even.arm_size(Arm::control) == 3);
}

TEST_CASE("complete randomization is uniform over the equal splits") {
  std::vector<Unit> units = {{"a", {}}, {"b", {}}, {"c", {}}, {"d", {}}};
  RandomSource rng(2026);
  std::map<std::string, int> split_counts;
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    const Allocation a = complete_randomization(units, rng);
    std::string key;
    for (const Unit& u : units)
      if (a.arm_of(u.id) == Arm::treatment) key += u.id;
    split_counts[key]++;
  }
  REQUIRE(split_counts.size() == 6);
  // Each of the six treatment sets should hit 1/6 within three binomial SEs.
  const double se = std::sqrt((1.0 / 6.0) * (5.0 / 6.0) / reps);
  for (const auto& [key, count] : split_counts) {
    CAPTURE(key);
    CHECK(near(static_cast<double>(count) / reps, 1.0 / 6.0, 3.0 * se));
  }
}

TEST_CASE("matched pairs on the mixed cohort: greedy pairing and coin split") {
  const Schema schema = mixed_schema();
  const std::vector<Unit> units = mixed_units();
  const GowerDistance d = GowerDistance::for_cohort(schema, units);
  RandomSource rng(17);
  const PairedAllocation pa = matched_pair_allocation(units, d, rng);

  REQUIRE(pa.pairs.size() == 2);
  CHECK(pa.pairs[0] == std::pair<std::string, std::string>("C1", "T1"));
  CHECK(pa.pairs[1] == std::pair<std::string, std::string>("C2", "T2"));
  CHECK(near(pa.total_distance, 421.0 / 1232.0, 1e-12));
  CHECK(near(pa.total_distance, d(units[0], units[1]) + d(units[2], units[3]),
             1e-15));

  // Pair members always land in opposite arms.
  for (const auto& [a, b] : pa.pairs)
    CHECK(pa.allocation.arm_of(a) == other_arm(pa.allocation.arm_of(b)));
  CHECK(pa.allocation.arm_size(Arm::treatment) == 2);

  // The greedy total here coincides with the exhaustive optimum.
  CHECK(near(pa.total_distance, optimal_matching_total(units, d), 1e-12));

  // Both within-pair orientations occur under repeated draws.
  std::set<std::string> seen;
  for (int r = 0; r < 64; ++r) {
    RandomSource coin(static_cast<std::uint64_t>(r));
    seen.insert(to_string(
        matched_pair_allocation(units, d, coin).allocation.arm_of("C1")));
  }
  CHECK(seen.size() == 2);
}

TEST_CASE("matched pairs input validation") {
  const Schema schema = mixed_schema();
  std::vector<Unit> units = mixed_units();
  const GowerDistance d = GowerDistance::for_cohort(schema, units);
  RandomSource rng(1);

  std::vector<Unit> odd(units.begin(), units.begin() + 3);
  CHECK_THROWS_AS(matched_pair_allocation(odd, d, rng), std::domain_error);

  std::vector<Unit> dup = units;
  dup[2].id = "C1";
  CHECK_THROWS_AS(matched_pair_allocation(dup, d, rng), std::domain_error);
}

TEST_CASE("greedy pairing never beats the exhaustive matching optimum") {
  const Schema schema = random_mixed_schema();
  RandomSource rng(404);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t pairs = 2 + rng.below(5);  // cohorts of 4..12
    const std::vector<Unit> units = random_mixed_cohort(rng, pairs);
    const GowerDistance d = GowerDistance::for_cohort(schema, units);
    RandomSource coin(trial);
    const PairedAllocation pa = matched_pair_allocation(units, d, coin);
    REQUIRE(pa.pairs.size() == pairs);
    const double optimum = optimal_matching_total(units, d);
    CAPTURE(trial);
    CHECK(pa.total_distance >= optimum - 1e-12);

    double direct = 0.0;
    std::set<std::string> covered;
    for (const auto& [a, b] : pa.pairs) {
      CHECK(a < b);
      covered.insert(a);
      covered.insert(b);
      const Unit* ua = nullptr;
      const Unit* ub = nullptr;
      for (const Unit& u : units) {
        if (u.id == a) ua = &u;
        if (u.id == b) ub = &u;
      }
      direct += d(*ua, *ub);
    }
    CHECK(covered.size() == units.size());
    CHECK(near(pa.total_distance, direct, 1e-12));
  }
}

TEST_CASE("matching identical units costs nothing") {
  const Schema schema({{"x", AttrKind::numeric}, {"flag", AttrKind::binary}});
  std::vector<Unit> units;
  for (int u = 0; u < 6; ++u)
    units.push_back({"u" + std::to_string(u), {2.5, 1.0}});
  const GowerDistance d = GowerDistance::for_cohort(schema, units);
  RandomSource rng(9);
  CHECK(matched_pair_allocation(units, d, rng).total_distance == 0.0);
}

TEST_CASE("minimization: worked two-factor example sends the unit to the smaller arm") {
  const Schema schema({{"old", AttrKind::binary}, {"smoker", AttrKind::binary}});
  for (const double size_weight : {1.0, 0.0}) {
    CAPTURE(size_weight);
    StrategyConfig config;
    config.kind = StrategyKind::minimization;
    config.biased_coin = 1.0;
    config.size_weight = size_weight;
    MinimizationState state(schema, config);

    // Treatment holds three elderly units, two of them smokers; control has
    // one elderly smoker.
    state.record({"t1", {1, 1}}, Arm::treatment);
    state.record({"t2", {1, 1}}, Arm::treatment);
    state.record({"t3", {1, 0}}, Arm::treatment);
    state.record({"c1", {1, 1}}, Arm::control);
    CHECK(state.arm_size(Arm::treatment) == 3);
    CHECK(state.arm_size(Arm::control) == 1);
    CHECK(state.level_count(Arm::treatment, 0, 1) == 3);
    CHECK(state.level_count(Arm::treatment, 1, 1) == 2);
    CHECK(state.level_count(Arm::control, 0, 1) == 1);
    CHECK(state.level_count(Arm::control, 1, 1) == 1);

    // A deterministic coin never consumes randomness on a strict minimizer,
    // so the stream position stays untouched.
    RandomSource rng(42), reference(42);
    CHECK(state.allocate({"next", {1, 1}}, rng) == Arm::control);
    CHECK(rng.next_u64() == reference.next_u64());
    CHECK(state.level_count(Arm::control, 1, 1) == 2);
  }
}

TEST_CASE("minimization: exact score ties fall to a fair coin") {
  const Schema schema({{"x", AttrKind::binary}});
  StrategyConfig config;
  config.kind = StrategyKind::minimization;
  int treated = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    MinimizationState state(schema, config);
    RandomSource rng(static_cast<std::uint64_t>(t));
    if (state.allocate({"first", {1}}, rng) == Arm::treatment) ++treated;
    // The tie consumed exactly one word from the stream.
    RandomSource reference(static_cast<std::uint64_t>(t));
    reference.next_u64();
    CHECK(rng.next_u64() == reference.next_u64());
  }
  const double se = std::sqrt(0.25 / trials);
  CHECK(near(static_cast<double>(treated) / trials, 0.5, 3.0 * se));
}

TEST_CASE("minimization with a deterministic coin caps one-factor imbalance at 1") {
  const Schema schema({{"x", AttrKind::binary}});
  StrategyConfig config;
  config.kind = StrategyKind::minimization;
  config.weights = {{"x", 1.0}};
  config.biased_coin = 1.0;
  config.size_weight = 0.0;
  MinimizationState state(schema, config);
  RandomSource rng(7);
  RandomSource values(99);
  for (int u = 0; u < 200; ++u) {
    const double v = static_cast<double>(values.below(2));
    state.allocate({"u" + std::to_string(u), {v}}, rng);
    for (const int level : {0, 1}) {
      const long long t = static_cast<long long>(
          state.level_count(Arm::treatment, 0, level));
      const long long c = static_cast<long long>(
          state.level_count(Arm::control, 0, level));
      CAPTURE(u);
      CAPTURE(level);
      CHECK(std::llabs(t - c) <= 1);
    }
  }
}

TEST_CASE("minimization configuration and input validation") {
  const Schema schema({{"x", AttrKind::binary}, {"score", AttrKind::numeric}});
  StrategyConfig config;
  config.kind = StrategyKind::minimization;

  StrategyConfig bad = config;
  bad.weights = {{"typo", 1.0}};
  CHECK_THROWS_AS(MinimizationState(schema, bad), std::domain_error);
  bad.weights = {{"x", -1.0}};
  CHECK_THROWS_AS(MinimizationState(schema, bad), std::domain_error);
  bad.weights = {{"score", 1.0}};
  CHECK_THROWS_AS(MinimizationState(schema, bad), std::domain_error);
  bad = config;
  bad.biased_coin = 0.4;
  CHECK_THROWS_AS(MinimizationState(schema, bad), std::domain_error);
  bad.biased_coin = 1.1;
  CHECK_THROWS_AS(MinimizationState(schema, bad), std::domain_error);
  bad = config;
  bad.size_weight = -0.5;
  CHECK_THROWS_AS(MinimizationState(schema, bad), std::domain_error);

  // With no explicit weights, the numeric factor is simply not balanced.
  MinimizationState state(schema, config);
  RandomSource rng(1);
  CHECK_THROWS_AS(state.allocate({"u", {2.0, 0.0}}, rng), std::domain_error);
  CHECK_THROWS_AS(state.allocate({"u", {1.0}}, rng), std::domain_error);
  state.allocate({"u", {1.0, 123.4}}, rng);
  CHECK(state.arm_size(Arm::treatment) + state.arm_size(Arm::control) == 1);
}

TEST_CASE("systematic split on the four-point cohort: perfect x, worst y") {
  const Schema schema = xy_schema();
  const std::vector<Unit> units = xy_units();

  const Allocation x_only = systematic_split(units, schema, {{"x", 1.0}}, 1000, 5);
  CHECK(split_objective(schema, units, x_only, {{"x", 1.0}}) == 0.0);
  CHECK(signed_sum(units, x_only, 0) == 0.0);
  // Balancing x alone forces {p1, p4} against {p2, p3}: the y sums then
  // differ by the maximum possible amount.
  CHECK(std::abs(signed_sum(units, x_only, 1)) == 4.0);

  // Equal weights reach the exhaustive optimum and settle on {p1, p3}.
  const std::map<std::string, double> both = {{"x", 1.0}, {"y", 1.0}};
  const Allocation balanced = systematic_split(units, schema, both, 1000, 5);
  const double optimum = optimal_split_objective(schema, units, both);
  CHECK(near(optimum, 2.0 / (2.0 * std::sqrt(1.25)), 1e-12));
  CHECK(near(split_objective(schema, units, balanced, both), optimum, 1e-12));
  CHECK(balanced.arm_of("p1") == balanced.arm_of("p3"));
  CHECK(balanced.arm_of("p2") == balanced.arm_of("p4"));
}

TEST_CASE("systematic split: local search is never worse than its start") {
  const Schema schema = random_mixed_schema();
  RandomSource rng(88);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t pairs = 2 + rng.below(5);
    const std::vector<Unit> units = random_mixed_cohort(rng, pairs);
    const std::map<std::string, double> weights = {
        {"flag", 1.0}, {"group", 1.0}, {"score", 1.0}};
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(trial);

    const Allocation searched = systematic_split(units, schema, weights, 1000, seed);
    const Allocation start = systematic_split(units, schema, weights, 0, seed);
    const double v_searched = split_objective(schema, units, searched, weights);
    const double v_start = split_objective(schema, units, start, weights);
    const double v_optimal = optimal_split_objective(schema, units, weights);
    CAPTURE(trial);
    CHECK(v_searched <= v_start + 1e-12);
    CHECK(v_searched >= v_optimal - 1e-12);
    CHECK(start.arm_size(Arm::treatment) == pairs);
    CHECK(searched.arm_size(Arm::treatment) == pairs);

    // The search only stops where no single swap improves.
    std::vector<std::string> t_ids, c_ids;
    for (const auto& [id, arm] : searched.entries())
      (arm == Arm::treatment ? t_ids : c_ids).push_back(id);
    for (const std::string& t : t_ids) {
      for (const std::string& c : c_ids) {
        Allocation swapped = searched;
        swapped.assign(t, Arm::control);
        swapped.assign(c, Arm::treatment);
        CHECK(split_objective(schema, units, swapped, weights) >= v_searched - 1e-12);
      }
    }
  }
}

TEST_CASE("systematic split validation and degenerate cohorts") {
  const Schema schema = xy_schema();
  std::vector<Unit> units = xy_units();
  CHECK_THROWS_AS(systematic_split(std::span<const Unit>(units.data(), 3), schema,
                                   {}, 1000, 1),
                  std::domain_error);
  CHECK_THROWS_AS(systematic_split(units, schema, {}, -1, 1), std::domain_error);

  std::vector<Unit> constant;
  for (int u = 0; u < 6; ++u)
    constant.push_back({"u" + std::to_string(u), {1.0, 1.0}});
  const Allocation a = systematic_split(constant, schema, {}, 1000, 1);
  CHECK(split_objective(schema, constant, a, {}) == 0.0);
}

TEST_CASE("strategy dispatcher: same seed same split, full coverage") {
  const Schema schema = random_mixed_schema();
  RandomSource rng(7);
  const std::vector<Unit> units = random_mixed_cohort(rng, 5);

  for (const StrategyKind kind :
       {StrategyKind::complete_random, StrategyKind::matched_pairs,
        StrategyKind::minimization, StrategyKind::systematic}) {
    CAPTURE(to_string(kind));
    StrategyConfig config;
    config.kind = kind;
    const Allocation first = allocate(units, schema, config, 31);
    const Allocation again = allocate(units, schema, config, 31);
    CHECK(first.entries() == again.entries());
    CHECK(first.size() == units.size());
    CHECK(first.arm_size(Arm::treatment) == 5);
    for (const Unit& u : units) CHECK(first.contains(u.id));
  }
}

TEST_CASE("strategy names round-trip through their string forms") {
  for (const StrategyKind kind :
       {StrategyKind::complete_random, StrategyKind::matched_pairs,
        StrategyKind::minimization, StrategyKind::systematic}) {
    CHECK(strategy_kind_from_string(to_string(kind)) == kind);
  }
  CHECK(!strategy_kind_from_string("stratified"));
}

#include "balancelab/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "balancelab/exact.hpp"

namespace balancelab {

std::string to_string(DependenceClass c) {
  switch (c) {
    case DependenceClass::benign: return "benign";
    case DependenceClass::neutral: return "neutral";
    case DependenceClass::malign: return "malign";
  }
  return "?";
}

Schema PopulationSpec::make_schema() const {
  std::vector<AttributeSpec> attrs;
  for (const BinaryFactorSpec& f : factors)
    attrs.push_back({f.name, AttrKind::binary, {}, 1.0, "", {}});
  if (ability)
    attrs.push_back({"ability", AttrKind::numeric, {}, 1.0, "", {}});
  if (rank_factor)
    attrs.push_back({"rank", AttrKind::ordinal, {}, 1.0, "", {}});
  return Schema(std::move(attrs));  // rejects duplicate names
}

namespace {

using Matrix = std::vector<std::vector<double>>;

// Cholesky factor tolerant of semidefinite input: a vanishing pivot zeroes
// its column (exactly what a correlation of +-1 produces) instead of
// failing. Genuinely indefinite input throws.
Matrix cholesky_psd(const Matrix& a) {
  const std::size_t m = a.size();
  const double tol = 1e-9;
  Matrix l(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (s < -tol)
          throw std::domain_error(
              "population: latent correlation matrix is not positive semidefinite");
        l[i][i] = s > tol ? std::sqrt(s) : 0.0;
      } else if (l[j][j] > 0.0) {
        l[i][j] = s / l[j][j];
      } else {
        if (std::fabs(s) > tol)
          throw std::domain_error(
              "population: latent correlation matrix is not positive semidefinite");
        l[i][j] = 0.0;
      }
    }
  }
  return l;
}

struct PreparedPopulation {
  Schema schema;
  Matrix chol;                     // factors x factors; empty when no factors
  std::vector<double> threshold;   // latent cut per factor (may be +-inf)
};

PreparedPopulation prepare(const PopulationSpec& population) {
  population.validate();
  PreparedPopulation prep{population.make_schema(), {}, {}};
  const std::size_t m = population.factors.size();
  if (m > 0) {
    Matrix r = population.latent_correlation;
    if (r.empty()) {
      r.assign(m, std::vector<double>(m, 0.0));
      for (std::size_t i = 0; i < m; ++i) r[i][i] = 1.0;
    }
    prep.chol = cholesky_psd(r);
    prep.threshold.reserve(m);
    for (const BinaryFactorSpec& f : population.factors) {
      if (f.prevalence <= 0.0)
        prep.threshold.push_back(std::numeric_limits<double>::infinity());
      else if (f.prevalence >= 1.0)
        prep.threshold.push_back(-std::numeric_limits<double>::infinity());
      else
        prep.threshold.push_back(normal_quantile(1.0 - f.prevalence));
    }
  }
  return prep;
}

std::vector<Unit> generate_prepared(const PopulationSpec& population,
                                    const PreparedPopulation& prep,
                                    RandomSource& rng) {
  const std::size_t m = population.factors.size();
  const std::size_t count = static_cast<std::size_t>(population.units);
  std::size_t width = 1;
  for (std::size_t v = count; v >= 10; v /= 10) ++width;

  std::vector<Unit> units(count);
  std::vector<double> g(m), z(m);
  for (std::size_t u = 0; u < count; ++u) {
    Unit& unit = units[u];
    std::string num = std::to_string(u + 1);
    unit.id = "u" + std::string(width - num.size(), '0') + num;
    unit.values.reserve(prep.schema.size());
    for (std::size_t j = 0; j < m; ++j) g[j] = rng.normal();
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k <= j; ++k) acc += prep.chol[j][k] * g[k];
      z[j] = acc;
      unit.values.push_back(z[j] > prep.threshold[j] ? 1.0 : 0.0);
    }
    if (population.ability)
      unit.values.push_back(population.ability->first +
                            population.ability->second * rng.normal());
    if (population.rank_factor) unit.values.push_back(0.0);  // fill below
  }
  if (population.rank_factor) {
    std::vector<double> ranks(count);
    std::iota(ranks.begin(), ranks.end(), 1.0);
    rng.shuffle(ranks);
    const std::size_t j = prep.schema.size() - 1;
    for (std::size_t u = 0; u < count; ++u) units[u].values[j] = ranks[u];
  }
  return units;
}

// Run fn(r) for r in [0, reps) across `jobs` threads in static contiguous
// chunks. fn writes only to r-indexed slots, so the partition never shows
// in the results. The first exception wins and is rethrown on the caller.
template <typename Fn>
void parallel_replications(int reps, int jobs, const Fn& fn) {
  jobs = std::clamp(jobs, 1, std::max(1, reps));
  if (jobs == 1) {
    for (int r = 0; r < reps; ++r) fn(r);
    return;
  }
  std::mutex mu;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  const int chunk = (reps + jobs - 1) / jobs;
  for (int w = 0; w < jobs; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(reps, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (int r = lo; r < hi; ++r) fn(r);
      } catch (...) {
        std::scoped_lock lock(mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Signed imbalance of one factor on that factor's natural scale.
double signed_stat(const Schema& schema, const ImbalanceReport& report,
                   std::size_t attr) {
  const std::string& name = schema.at(attr).name;
  switch (schema.at(attr).kind) {
    case AttrKind::binary:
      for (const auto& b : report.binary)
        if (b.factor == name) return b.diff;
      break;
    case AttrKind::categorical:
      for (const auto& c : report.categorical)
        if (c.factor == name) {
          int best = 0;
          for (const auto& [level, d] : c.level_diffs)
            if (std::abs(d) > std::abs(best)) best = d;
          return best;
        }
      break;
    case AttrKind::ordinal:
      for (const auto& o : report.ordinal)
        if (o.factor == name) return o.rank_sum_diff;
      break;
    case AttrKind::numeric:
      for (const auto& q : report.numeric)
        if (q.factor == name) return q.mean_diff;
      break;
  }
  throw std::domain_error("simulation: factor '" + name + "' missing from report");
}

}  // namespace

void PopulationSpec::validate() const {
  if (units < 2)
    throw std::domain_error("population: needs at least two units");
  for (const BinaryFactorSpec& f : factors) {
    if (f.name.empty())
      throw std::domain_error("population: factor names must be non-empty");
    if (!std::isfinite(f.prevalence) || f.prevalence < 0.0 || f.prevalence > 1.0)
      throw std::domain_error("population: factor '" + f.name +
                              "' needs a prevalence in [0, 1]");
  }
  if (ability && !(std::isfinite(ability->second) && ability->second >= 0.0))
    throw std::domain_error("population: ability needs a non-negative sd");
  const std::size_t m = factors.size();
  if (!latent_correlation.empty()) {
    if (latent_correlation.size() != m)
      throw std::domain_error(
          "population: correlation matrix must match the factor count");
    for (std::size_t i = 0; i < m; ++i) {
      if (latent_correlation[i].size() != m)
        throw std::domain_error("population: correlation matrix must be square");
      if (std::fabs(latent_correlation[i][i] - 1.0) > 1e-12)
        throw std::domain_error("population: correlation diagonal must be 1");
      for (std::size_t j = 0; j < m; ++j) {
        const double v = latent_correlation[i][j];
        if (!std::isfinite(v) || v < -1.0 || v > 1.0)
          throw std::domain_error(
              "population: correlations must lie in [-1, 1]");
        if (std::fabs(v - latent_correlation[j][i]) > 1e-12)
          throw std::domain_error("population: correlation matrix must be symmetric");
      }
    }
    cholesky_psd(latent_correlation);  // throws when not PSD
  }
  make_schema();  // throws on name collisions
}

std::vector<Unit> generate_population(const PopulationSpec& population,
                                      RandomSource& rng) {
  const PreparedPopulation prep = prepare(population);
  return generate_prepared(population, prep, rng);
}

SimulationResult run_replications(
    const PopulationSpec& population, const StrategyConfig& strategy,
    const std::map<std::string, ComparabilityThreshold>& thresholds,
    int replications, std::uint64_t seed, int jobs) {
  if (replications < 1)
    throw std::domain_error("simulation: needs at least one replication");
  const PreparedPopulation prep = prepare(population);
  for (const auto& [name, thr] : thresholds) {
    (void)thr;
    if (!prep.schema.index_of(name))
      throw std::domain_error("thresholds: unknown factor '" + name + "'");
  }

  const std::size_t n_factors = thresholds.size();
  const std::size_t reps = static_cast<std::size_t>(replications);
  std::vector<std::uint8_t> all_ok(reps, 0);
  std::vector<std::vector<std::uint8_t>> factor_ok(n_factors,
                                                   std::vector<std::uint8_t>(reps, 0));
  std::vector<std::vector<double>> factor_abs(n_factors, std::vector<double>(reps, 0.0));
  std::vector<std::vector<double>> factor_signed(n_factors,
                                                 std::vector<double>(reps, 0.0));
  std::vector<double> size_diff(reps, 0.0);

  std::vector<std::size_t> thresholded_attrs;
  for (const auto& [name, thr] : thresholds) {
    (void)thr;
    thresholded_attrs.push_back(*prep.schema.index_of(name));
  }

  parallel_replications(replications, jobs, [&](int r) {
    RandomSource gen = RandomSource::for_stream(seed, static_cast<std::uint64_t>(r),
                                                kStreamGenerate);
    const std::vector<Unit> units = generate_prepared(population, prep, gen);
    const Allocation allocation = allocate(units, prep.schema, strategy, seed,
                                           static_cast<std::uint64_t>(r));
    const ImbalanceReport report = imbalance_report(prep.schema, units, allocation, 1);
    const ComparabilityVerdict verdict = is_comparable(prep.schema, report, thresholds);

    const auto ri = static_cast<std::size_t>(r);
    all_ok[ri] = verdict.comparable ? 1 : 0;
    for (std::size_t f = 0; f < n_factors; ++f) {
      factor_ok[f][ri] = verdict.factors[f].within ? 1 : 0;
      factor_abs[f][ri] = verdict.factors[f].statistic;
      factor_signed[f][ri] = signed_stat(prep.schema, report, thresholded_attrs[f]);
    }
    size_diff[ri] = std::fabs(static_cast<double>(report.arm_treatment) -
                              static_cast<double>(report.arm_control));
  });

  SimulationResult result;
  result.seed = seed;
  result.replications = replications;
  // Ordered reductions: byte-identical output for every jobs value.
  double joint = 0.0, sizes = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    joint += all_ok[r];
    sizes += size_diff[r];
  }
  result.all_comparable_rate = joint / static_cast<double>(reps);
  result.standard_error = std::sqrt(result.all_comparable_rate *
                                    (1.0 - result.all_comparable_rate) /
                                    static_cast<double>(reps));
  result.mean_arm_size_diff = sizes / static_cast<double>(reps);
  std::size_t f = 0;
  for (const auto& [name, thr] : thresholds) {
    (void)thr;
    FactorStats stats;
    stats.factor = name;
    double ok = 0.0, abs_acc = 0.0, signed_acc = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      ok += factor_ok[f][r];
      abs_acc += factor_abs[f][r];
      signed_acc += factor_signed[f][r];
    }
    stats.comparable_rate = ok / static_cast<double>(reps);
    stats.mean_abs_imbalance = abs_acc / static_cast<double>(reps);
    stats.mean_signed_imbalance = signed_acc / static_cast<double>(reps);
    result.factors.push_back(std::move(stats));
    ++f;
  }
  return result;
}

StrategyComparison compare_strategies(const PopulationSpec& population,
                                      const std::string& observed_factor,
                                      int budget, int replications,
                                      std::uint64_t seed, int jobs) {
  if (replications < 1)
    throw std::domain_error("comparison: needs at least one replication");
  const PreparedPopulation prep = prepare(population);
  const auto observed_idx = prep.schema.index_of(observed_factor);
  if (!observed_idx)
    throw std::domain_error("comparison: unknown observed factor '" +
                            observed_factor + "'");
  if (prep.schema.at(*observed_idx).kind != AttrKind::binary)
    throw std::domain_error("comparison: observed factor must be binary");
  if (population.units % 2 != 0)
    throw std::domain_error("comparison: cohort size must be even");

  const std::map<std::string, double> weights{{observed_factor, 1.0}};
  const std::size_t m = prep.schema.size();
  const std::size_t reps = static_cast<std::size_t>(replications);
  std::vector<std::vector<double>> sys_abs(m, std::vector<double>(reps, 0.0));
  std::vector<std::vector<double>> ran_abs(m, std::vector<double>(reps, 0.0));

  parallel_replications(replications, jobs, [&](int r) {
    const auto ri = static_cast<std::size_t>(r);
    RandomSource gen = RandomSource::for_stream(seed, ri, kStreamGenerate);
    const std::vector<Unit> units = generate_prepared(population, prep, gen);

    RandomSource ran_rng = RandomSource::for_stream(seed, ri, kStreamAllocate);
    const Allocation randomized = complete_randomization(units, ran_rng);
    const Allocation systematic = systematic_split(
        units, prep.schema, weights, budget, combine_seed(seed, ri));

    const ImbalanceReport ran_report =
        imbalance_report(prep.schema, units, randomized, 1);
    const ImbalanceReport sys_report =
        imbalance_report(prep.schema, units, systematic, 1);
    for (std::size_t j = 0; j < m; ++j) {
      ran_abs[j][ri] = std::fabs(signed_stat(prep.schema, ran_report, j));
      sys_abs[j][ri] = std::fabs(signed_stat(prep.schema, sys_report, j));
    }
  });

  StrategyComparison comparison;
  comparison.seed = seed;
  comparison.replications = replications;
  comparison.observed = observed_factor;
  for (std::size_t j = 0; j < m; ++j) {
    FactorComparison fc;
    fc.factor = prep.schema.at(j).name;
    double sys_sum = 0.0, ran_sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      sys_sum += sys_abs[j][r];
      ran_sum += ran_abs[j][r];
    }
    fc.mean_systematic = sys_sum / static_cast<double>(reps);
    fc.mean_randomized = ran_sum / static_cast<double>(reps);
    const double mean_diff = fc.mean_systematic - fc.mean_randomized;
    double ss = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const double d = (sys_abs[j][r] - ran_abs[j][r]) - mean_diff;
      ss += d * d;
    }
    const double sd = reps > 1 ? std::sqrt(ss / static_cast<double>(reps - 1)) : 0.0;
    fc.diff_se = sd / std::sqrt(static_cast<double>(reps));
    const double band = 3.0 * fc.diff_se;
    if (mean_diff < -band)
      fc.cls = DependenceClass::benign;
    else if (mean_diff > band)
      fc.cls = DependenceClass::malign;
    else
      fc.cls = DependenceClass::neutral;
    if (j == *observed_idx)
      comparison.observed_factor = std::move(fc);
    else
      comparison.unobserved.push_back(std::move(fc));
  }
  return comparison;
}

}  // namespace balancelab

#include "balancelab/cli.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <span>
#include <sstream>

#include <CLI11.hpp>

#include "balancelab/allocation.hpp"
#include "balancelab/cohort.hpp"
#include "balancelab/config.hpp"
#include "balancelab/csvio.hpp"
#include "balancelab/exact.hpp"
#include "balancelab/metrics.hpp"
#include "balancelab/report_io.hpp"
#include "balancelab/rng.hpp"
#include "balancelab/simulation.hpp"

namespace balancelab {

namespace {

// Invocation problems detected after flag parsing (bad strategy name, bad
// environment seed): same exit code as a CLI11 parse error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format_sig(double v, int digits) {
  if (digits < 1 || digits > 17) throw UsageError("--precision must lie in [1, 17]");
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

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

std::uint64_t parse_seed_text(const std::string& text, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE ||
      text.front() == '-')
    throw UsageError(what + " must be a decimal 64-bit integer, got '" + text + "'");
  return v;
}

// Flag wins over the environment; the caller supplies any further fallback.
std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("BALANCELAB_SEED"))
    return parse_seed_text(env, "BALANCELAB_SEED");
  return std::nullopt;
}

std::map<std::string, double> parse_weights_text(const std::string& text) {
  std::map<std::string, double> weights;
  if (text.empty()) return weights;
  std::istringstream parts(text);
  std::string item;
  while (std::getline(parts, item, ',')) {
    const std::size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw UsageError("--weights entries look like 'factor:weight'");
    const std::string name = item.substr(0, colon);
    const std::string value = item.substr(colon + 1);
    errno = 0;
    char* end = nullptr;
    const double w = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE ||
        !std::isfinite(w))
      throw UsageError("--weights: bad weight '" + value + "' for '" + name + "'");
    weights[name] = w;
  }
  return weights;
}

StrategyKind parse_strategy_text(const std::string& text) {
  const auto kind = strategy_kind_from_string(text);
  if (!kind)
    throw UsageError(
        "unknown strategy '" + text +
        "' (complete-random, matched-pairs, minimization, systematic)");
  return *kind;
}

void check_interaction_cap(int interactions, int cap) {
  if (interactions > cap)
    throw std::domain_error("interaction order " + std::to_string(interactions) +
                            " exceeds the cap of " + std::to_string(cap) +
                            " (raise --interaction-cap to override)");
}

// Assignment files must cover the cohort exactly.
void check_coverage(std::span<const Unit> units, const Allocation& allocation,
                    const std::string& source) {
  for (const Unit& u : units)
    if (!allocation.contains(u.id))
      throw DataError(source + ": no arm assigned to unit '" + u.id + "'");
  if (allocation.size() != units.size())
    throw DataError(source + ": assignment lists " +
                    std::to_string(allocation.size()) + " ids, cohort has " +
                    std::to_string(units.size()));
}

void write_assignment_csv(std::ostream& out, std::span<const Unit> units,
                          const Allocation& allocation) {
  out << "id,arm\n";
  for (const Unit& u : units)
    out << csv_escape(u.id) << "," << to_string(allocation.arm_of(u.id)) << "\n";
}

void write_simulation_csv(std::ostream& out, const SimulationResult& result,
                          StrategyKind kind) {
  out << "key,value\n";
  out << "mode,replications\n";
  out << "strategy," << to_string(kind) << "\n";
  out << "seed," << result.seed << "\n";
  out << "replications," << result.replications << "\n";
  out << "all_comparable_rate," << render_number(result.all_comparable_rate) << "\n";
  out << "standard_error," << render_number(result.standard_error) << "\n";
  out << "mean_arm_size_diff," << render_number(result.mean_arm_size_diff) << "\n";
  for (const FactorStats& f : result.factors) {
    const std::string prefix = "factor." + f.factor + ".";
    out << csv_escape(prefix + "comparable_rate") << ","
        << render_number(f.comparable_rate) << "\n";
    out << csv_escape(prefix + "mean_abs_imbalance") << ","
        << render_number(f.mean_abs_imbalance) << "\n";
    out << csv_escape(prefix + "mean_signed_imbalance") << ","
        << render_number(f.mean_signed_imbalance) << "\n";
  }
}

void write_comparison_factor(std::ostream& out, const std::string& prefix,
                             const FactorComparison& fc) {
  out << csv_escape(prefix + ".mean_systematic") << ","
      << render_number(fc.mean_systematic) << "\n";
  out << csv_escape(prefix + ".mean_randomized") << ","
      << render_number(fc.mean_randomized) << "\n";
  out << csv_escape(prefix + ".diff_se") << "," << render_number(fc.diff_se) << "\n";
  out << csv_escape(prefix + ".class") << "," << to_string(fc.cls) << "\n";
}

void write_comparison_csv(std::ostream& out, const StrategyComparison& cmp) {
  out << "key,value\n";
  out << "mode,compare\n";
  out << "seed," << cmp.seed << "\n";
  out << "replications," << cmp.replications << "\n";
  out << "observed," << csv_escape(cmp.observed) << "\n";
  write_comparison_factor(out, "observed." + cmp.observed, cmp.observed_factor);
  for (const FactorComparison& fc : cmp.unobserved)
    write_comparison_factor(out, "unobserved." + fc.factor, fc);
}

}  // namespace

int run_cli(const std::vector<std::string>& argv, std::istream& in,
            std::ostream& out, std::ostream& err) {
  CLI::App app{"comparability diagnostics for randomized two-group assignment",
               "balancelab"};
  app.require_subcommand(1);
  std::function<void()> action;

  // ---- prob ----------------------------------------------------------------
  auto* prob = app.add_subcommand("prob", "exact comparability probabilities");
  prob->require_subcommand(1);

  struct {
    int i = 0, n = 0, precision = 2;
    double p = 0.0, l = 0.0, sigma = 1.0;
    bool absolute = false;
  } pr;

  auto* prob_binary = prob->add_subcommand(
      "binary", "P(|D| <= n/i) for a binary trait with prevalence p");
  prob_binary->add_option("--i", pr.i, "comparability fraction i")->required();
  prob_binary->add_option("--n", pr.n, "group size n")->required();
  prob_binary->add_option("--p", pr.p, "trait prevalence")->required();
  prob_binary->add_option("--precision", pr.precision, "significant digits");
  prob_binary->callback([&] {
    action = [&] {
      out << format_sig(binary_comparability_prob(pr.i, BinaryModel(pr.n, pr.p)),
                        pr.precision)
          << "\n";
    };
  });

  auto* prob_rank = prob->add_subcommand(
      "rank", "P(|D| <= n^2/i) for the rank-sum difference over ranks 1..2n");
  prob_rank->add_option("--i", pr.i, "comparability fraction i")->required();
  prob_rank->add_option("--n", pr.n, "group size n")->required();
  prob_rank->add_option("--precision", pr.precision, "significant digits");
  prob_rank->callback([&] {
    action = [&] {
      out << format_sig(rank_comparability_prob(pr.i, RankModel(pr.n)), pr.precision)
          << "\n";
    };
  });

  auto* prob_cont = prob->add_subcommand(
      "continuous", "P(|Q| <= l*sigma) for a normal trait (--absolute bounds |D|)");
  prob_cont->add_option("--l", pr.l, "bound l in units of sigma")->required();
  prob_cont->add_option("--n", pr.n, "group size n")->required();
  prob_cont->add_option("--sigma", pr.sigma, "trait standard deviation");
  prob_cont->add_flag("--absolute", pr.absolute, "bound the sum difference D");
  prob_cont->add_option("--precision", pr.precision, "significant digits");
  prob_cont->callback([&] {
    action = [&] {
      out << format_sig(
                 continuous_comparability_prob(
                     pr.l, ContinuousModel(pr.n, pr.sigma),
                     pr.absolute ? ImbalanceScale::absolute : ImbalanceScale::relative),
                 pr.precision)
          << "\n";
    };
  });

  // ---- samplesize ----------------------------------------------------------
  auto* samplesize =
      app.add_subcommand("samplesize", "smallest group size with margin k");
  samplesize->require_subcommand(1);

  struct {
    int i = 0;
    double k = 0.0, p = 0.0, l = 0.0;
  } ss;

  auto* ss_binary = samplesize->add_subcommand("binary", "ceil(2p(1-p)(ik)^2)");
  ss_binary->add_option("--i", ss.i, "comparability fraction i")->required();
  ss_binary->add_option("--k", ss.k, "sigma-rule margin k")->required();
  ss_binary->add_option("--p", ss.p, "trait prevalence")->required();
  ss_binary->callback([&] {
    action = [&] { out << binary_sample_size(ss.i, ss.k, ss.p) << "\n"; };
  });

  auto* ss_rank = samplesize->add_subcommand("rank", "ceil(ik(ik+sqrt((ik)^2+3))/3)");
  ss_rank->add_option("--i", ss.i, "comparability fraction i")->required();
  ss_rank->add_option("--k", ss.k, "sigma-rule margin k")->required();
  ss_rank->callback([&] {
    action = [&] { out << rank_sample_size(ss.i, ss.k) << "\n"; };
  });

  auto* ss_cont = samplesize->add_subcommand("continuous", "ceil(2k^2/l^2)");
  ss_cont->add_option("--l", ss.l, "bound l in units of sigma")->required();
  ss_cont->add_option("--k", ss.k, "sigma-rule margin k")->required();
  ss_cont->callback([&] {
    action = [&] { out << continuous_sample_size(ss.l, ss.k) << "\n"; };
  });

  // ---- pmf -------------------------------------------------------------------
  auto* pmf = app.add_subcommand("pmf", "full imbalance distribution as CSV");
  pmf->require_subcommand(1);

  struct {
    int n = 0;
    double p = 0.0;
  } pm;

  auto* pmf_binary = pmf->add_subcommand("binary", "P(D=d) for d in [-n, n]");
  pmf_binary->add_option("--n", pm.n, "group size n")->required();
  pmf_binary->add_option("--p", pm.p, "trait prevalence")->required();
  pmf_binary->callback([&] {
    action = [&] {
      const BinaryModel model(pm.n, pm.p);
      const std::vector<double> table = detail::binary_pmf_table(model);
      out << "d,probability\n";
      for (int d = -pm.n; d <= pm.n; ++d)
        out << d << "," << render_number(table[static_cast<std::size_t>(d + pm.n)])
            << "\n";
    };
  });

  auto* pmf_rank = pmf->add_subcommand("rank", "P(D=d) over the reachable d");
  pmf_rank->add_option("--n", pm.n, "group size n")->required();
  pmf_rank->callback([&] {
    action = [&] {
      const RankModel model(pm.n);
      out << "d,probability\n";
      for (const auto& [d, prob] : detail::rank_pmf_table(model))
        out << d << "," << render_number(prob) << "\n";
    };
  });

  // ---- joint -----------------------------------------------------------------
  auto* joint = app.add_subcommand(
      "joint", "probability that every factor is simultaneously comparable");
  struct {
    std::vector<double> qs;
    int m = 1;
    int precision = 2;
    bool complement = false;
  } jn;
  joint->add_option("--q", jn.qs, "per-factor comparability probabilities")
      ->required()
      ->delimiter(',');
  joint->add_option("--m", jn.m, "repeat the probability list m times");
  joint->add_flag("--complement", jn.complement,
                  "print the non-comparability probability instead");
  joint->add_option("--precision", jn.precision, "significant digits");
  joint->callback([&] {
    action = [&] {
      if (jn.m < 1) throw std::domain_error("joint: --m must be at least 1");
      std::vector<double> expanded;
      expanded.reserve(jn.qs.size() * static_cast<std::size_t>(jn.m));
      for (int rep = 0; rep < jn.m; ++rep)
        expanded.insert(expanded.end(), jn.qs.begin(), jn.qs.end());
      const double value = jn.complement ? joint_noncomparability(expanded)
                                         : joint_comparability(expanded);
      out << format_sig(value, jn.precision) << "\n";
    };
  });

  // ---- figure ----------------------------------------------------------------
  auto* figure = app.add_subcommand(
      "figure", "bound line n/i and k*sigma(D) curves per prevalence, as CSV");
  struct {
    int i = 0, n_max = 0;
    double k = 0.0;
    std::vector<double> ps;
  } fg;
  figure->add_option("--i", fg.i, "comparability fraction i")->required();
  figure->add_option("--k", fg.k, "sigma-rule margin k")->required();
  figure->add_option("--p", fg.ps, "prevalences, comma separated")
      ->required()
      ->delimiter(',');
  figure->add_option("--n-max", fg.n_max, "largest group size")->required();
  figure->callback([&] {
    action = [&] {
      if (fg.i < 1) throw std::domain_error("figure: --i must be at least 1");
      if (fg.n_max < 1) throw std::domain_error("figure: --n-max must be at least 1");
      if (!(fg.k > 0.0)) throw std::domain_error("figure: --k must be positive");
      for (double p : fg.ps)
        if (!(p >= 0.0 && p <= 1.0))
          throw std::domain_error("figure: prevalences must lie in [0, 1]");
      out << "n,bound";
      for (double p : fg.ps) out << ",ksigma[p=" << render_number(p) << "]";
      out << "\n";
      for (int n = 1; n <= fg.n_max; ++n) {
        out << n << "," << render_number(static_cast<double>(n) / fg.i);
        for (double p : fg.ps)
          out << ","
              << render_number(fg.k * std::sqrt(2.0 * p * (1.0 - p) *
                                                static_cast<double>(n)));
        out << "\n";
      }
    };
  });

  // ---- simulate ---------------------------------------------------------------
  auto* simulate = app.add_subcommand(
      "simulate", "Monte Carlo comparability rates from a config file");
  struct {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    int jobs = 1;
  } sim;
  simulate->add_option("--config", sim.config, "simulation config file")->required();
  simulate->add_option("--seed", sim.seed, "replication stream seed");
  simulate->add_option("--reps", sim.reps, "override the replication count");
  simulate->add_option("--jobs", sim.jobs, "worker threads");
  simulate->callback([&] {
    action = [&] {
      SimulateJob job = load_simulate_config(sim.config);
      if (const auto seed = resolve_seed(sim.seed)) job.seed = *seed;
      if (sim.reps) job.replications = *sim.reps;
      if (!job.compare_mode) {
        const SimulationResult result =
            run_replications(job.population, job.strategy, job.thresholds,
                             job.replications, job.seed, sim.jobs);
        write_simulation_csv(out, result, job.strategy.kind);
      } else {
        if (job.strategy.kind != StrategyKind::systematic)
          throw DataError(sim.config +
                          ": compare mode needs 'kind = systematic' in [strategy]");
        for (const auto& [name, w] : job.strategy.weights)
          if (w != 0.0 && name != job.observed)
            throw std::domain_error(
                "compare mode: the systematic objective may only reference the "
                "observed factor '" +
                job.observed + "', not '" + name + "'");
        const StrategyComparison cmp =
            compare_strategies(job.population, job.observed, job.strategy.budget,
                               job.replications, job.seed, sim.jobs);
        write_comparison_csv(out, cmp);
      }
    };
  });

  // ---- allocate ----------------------------------------------------------------
  auto* alloc_cmd = app.add_subcommand("allocate", "assign units to arms");
  alloc_cmd->require_subcommand(1);

  struct {
    std::string cohort, schema, strategy, weights, report_path;
    std::optional<std::uint64_t> seed;
    double biased_coin = 1.0, size_weight = 1.0;
    int budget = 1000, interactions = 1, interaction_cap = 3;
  } ab;

  auto* alloc_batch = alloc_cmd->add_subcommand(
      "batch", "allocate a whole cohort; emits id,arm CSV plus a report");
  alloc_batch->add_option("--cohort", ab.cohort, "cohort CSV")->required();
  alloc_batch->add_option("--schema", ab.schema, "schema sidecar")->required();
  alloc_batch->add_option("--strategy", ab.strategy, "allocation strategy")->required();
  alloc_batch->add_option("--seed", ab.seed, "allocation stream seed");
  alloc_batch->add_option("--weights", ab.weights, "factor:weight,... overrides");
  alloc_batch->add_option("--biased-coin", ab.biased_coin,
                          "minimization: probability of following the minimizer");
  alloc_batch->add_option("--size-weight", ab.size_weight,
                          "minimization: weight of the arm-size factor");
  alloc_batch->add_option("--budget", ab.budget, "systematic: swap budget");
  alloc_batch->add_option("--interactions", ab.interactions,
                          "interaction order in the report");
  alloc_batch->add_option("--interaction-cap", ab.interaction_cap,
                          "safety cap on the interaction order");
  alloc_batch->add_option("--report", ab.report_path,
                          "write the report CSV here instead of stdout");
  alloc_batch->callback([&] {
    action = [&] {
      StrategyConfig config;
      config.kind = parse_strategy_text(ab.strategy);
      config.weights = parse_weights_text(ab.weights);
      config.biased_coin = ab.biased_coin;
      config.size_weight = ab.size_weight;
      config.budget = ab.budget;
      check_interaction_cap(ab.interactions, ab.interaction_cap);
      const Schema schema = load_schema(ab.schema);
      const std::vector<Unit> units = load_cohort(ab.cohort, schema);
      const std::uint64_t seed = resolve_seed(ab.seed).value_or(0);
      const Allocation allocation = allocate(units, schema, config, seed);
      const ImbalanceReport report =
          imbalance_report(schema, units, allocation, ab.interactions);
      write_assignment_csv(out, units, allocation);
      if (ab.report_path.empty()) {
        out << "\n";
        write_report_csv(out, report);
      } else {
        std::ofstream file(ab.report_path);
        if (!file)
          throw DataError("cannot open report file '" + ab.report_path + "'");
        write_report_csv(file, report);
      }
    };
  });

  struct {
    std::string schema, strategy, weights;
    std::optional<std::uint64_t> seed;
    double biased_coin = 1.0, size_weight = 1.0;
  } as;

  auto* alloc_seq = alloc_cmd->add_subcommand(
      "sequential", "read unit records line by line, answer with an arm per line");
  alloc_seq->add_option("--schema", as.schema, "schema sidecar")->required();
  alloc_seq->add_option("--strategy", as.strategy, "allocation strategy")->required();
  alloc_seq->add_option("--seed", as.seed, "allocation stream seed");
  alloc_seq->add_option("--weights", as.weights, "factor:weight,... overrides");
  alloc_seq->add_option("--biased-coin", as.biased_coin,
                        "probability of following the minimizer");
  alloc_seq->add_option("--size-weight", as.size_weight,
                        "weight of the arm-size factor");
  alloc_seq->callback([&] {
    action = [&] {
      StrategyConfig config;
      config.kind = parse_strategy_text(as.strategy);
      if (config.kind != StrategyKind::minimization)
        throw UsageError("allocate sequential supports only --strategy minimization");
      config.weights = parse_weights_text(as.weights);
      config.biased_coin = as.biased_coin;
      config.size_weight = as.size_weight;
      const Schema schema = load_schema(as.schema);
      MinimizationState state(schema, config);
      RandomSource rng = RandomSource::for_stream(
          resolve_seed(as.seed).value_or(0), 0, kStreamAllocate);
      std::string line;
      std::size_t line_no = 0;
      std::set<std::string> seen;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const Unit unit = parse_unit_record(line, schema, "stdin", line_no);
        if (!seen.insert(unit.id).second)
          throw DataError("stdin", line_no, "duplicate id '" + unit.id + "'");
        out << to_string(state.allocate(unit, rng)) << "\n" << std::flush;
      }
    };
  });

  // ---- report ---------------------------------------------------------------
  struct {
    std::string cohort, schema, assignment;
    int interactions = 1, interaction_cap = 3;
  } rp;
  auto* report_cmd = app.add_subcommand(
      "report", "imbalance report for an existing cohort + assignment");
  report_cmd->add_option("--cohort", rp.cohort, "cohort CSV")->required();
  report_cmd->add_option("--schema", rp.schema, "schema sidecar")->required();
  report_cmd->add_option("--assignment", rp.assignment, "id,arm CSV")->required();
  report_cmd->add_option("--interactions", rp.interactions,
                         "interaction order in the report");
  report_cmd->add_option("--interaction-cap", rp.interaction_cap,
                         "safety cap on the interaction order");
  report_cmd->callback([&] {
    action = [&] {
      check_interaction_cap(rp.interactions, rp.interaction_cap);
      const Schema schema = load_schema(rp.schema);
      const std::vector<Unit> units = load_cohort(rp.cohort, schema);
      const Allocation allocation = load_assignment(rp.assignment);
      check_coverage(units, allocation, rp.assignment);
      write_report_csv(out,
                       imbalance_report(schema, units, allocation, rp.interactions));
    };
  });

  // ---- parse and run -----------------------------------------------------------
  try {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    // Help requests land here too; CLI11 prints them on `out` with code 0.
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace balancelab

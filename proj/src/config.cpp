#include "balancelab/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

#include "balancelab/csvio.hpp"

namespace balancelab {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double need_number(const std::string& value, const std::string& source,
                   std::size_t line, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE ||
      !std::isfinite(v))
    throw DataError(source, line, what + " must be a number, got '" + value + "'");
  return v;
}

long long need_integer(const std::string& value, const std::string& source,
                       std::size_t line, const std::string& what) {
  const double v = need_number(value, source, line, what);
  if (v != std::floor(v))
    throw DataError(source, line, what + " must be an integer, got '" + value + "'");
  return static_cast<long long>(v);
}

bool need_bool(const std::string& value, const std::string& source,
               std::size_t line, const std::string& what) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw DataError(source, line, what + " must be true or false, got '" + value + "'");
}

}  // namespace

SimulateJob parse_simulate_config(std::istream& in, const std::string& source_name) {
  SimulateJob job;
  job.strategy.kind = StrategyKind::complete_random;

  struct CorrelationEntry {
    std::string a, b;
    double rho;
    std::size_t line;
  };
  std::vector<CorrelationEntry> correlations;

  std::string section;
  std::string current_factor;
  std::string raw;
  std::size_t line = 0;

  auto factor_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < job.population.factors.size(); ++i)
      if (job.population.factors[i].name == name) return i;
    return job.population.factors.size();
  };

  while (std::getline(in, raw)) {
    ++line;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;

    if (text.front() == '[') {
      if (text.back() != ']')
        throw DataError(source_name, line, "unterminated section header");
      const std::string inside = trim(text.substr(1, text.size() - 2));
      if (inside == "factor" || inside.rfind("factor ", 0) == 0) {
        section = "factor";
        current_factor = inside.size() > 7 ? trim(inside.substr(7)) : "";
        if (current_factor.empty())
          throw DataError(source_name, line, "factor section needs a name");
        if (factor_index(current_factor) != job.population.factors.size())
          throw DataError(source_name, line,
                          "factor '" + current_factor + "' declared twice");
        job.population.factors.push_back({current_factor, 0.5});
      } else if (inside == "population" || inside == "correlation" ||
                 inside == "strategy" || inside == "thresholds" ||
                 inside == "run") {
        section = inside;
      } else {
        throw DataError(source_name, line, "unknown section '[" + inside + "]'");
      }
      continue;
    }

    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw DataError(source_name, line, "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw DataError(source_name, line, "empty key");

    if (section == "population") {
      if (key == "units") {
        job.population.units =
            static_cast<int>(need_integer(value, source_name, line, "units"));
      } else if (key == "ability") {
        std::istringstream parts(value);
        std::string mean_text, sd_text;
        if (!std::getline(parts, mean_text, ',') || !std::getline(parts, sd_text))
          throw DataError(source_name, line, "ability must look like 'mean,sd'");
        job.population.ability = std::make_pair(
            need_number(trim(mean_text), source_name, line, "ability mean"),
            need_number(trim(sd_text), source_name, line, "ability sd"));
      } else if (key == "rank_factor") {
        job.population.rank_factor = need_bool(value, source_name, line, "rank_factor");
      } else {
        throw DataError(source_name, line, "unknown population key '" + key + "'");
      }
    } else if (section == "factor") {
      if (key == "p") {
        job.population.factors[factor_index(current_factor)].prevalence =
            need_number(value, source_name, line, "prevalence");
      } else {
        throw DataError(source_name, line, "unknown factor key '" + key + "'");
      }
    } else if (section == "correlation") {
      std::istringstream names(key);
      std::string a, b, extra;
      names >> a >> b;
      if (a.empty() || b.empty() || (names >> extra))
        throw DataError(source_name, line,
                        "correlation keys look like '<factor> <factor>'");
      correlations.push_back(
          {a, b, need_number(value, source_name, line, "correlation"), line});
    } else if (section == "strategy") {
      if (key == "kind") {
        const auto kind = strategy_kind_from_string(value);
        if (!kind)
          throw DataError(source_name, line, "unknown strategy kind '" + value + "'");
        job.strategy.kind = *kind;
      } else if (key == "weights") {
        std::istringstream parts(value);
        std::string item;
        while (std::getline(parts, item, ',')) {
          item = trim(item);
          const std::size_t colon = item.find(':');
          if (colon == std::string::npos)
            throw DataError(source_name, line,
                            "weights look like 'name:w,name:w'");
          const std::string name = trim(item.substr(0, colon));
          job.strategy.weights[name] = need_number(
              trim(item.substr(colon + 1)), source_name, line, "weight");
        }
      } else if (key == "biased_coin") {
        job.strategy.biased_coin = need_number(value, source_name, line, "biased_coin");
      } else if (key == "budget") {
        job.strategy.budget =
            static_cast<int>(need_integer(value, source_name, line, "budget"));
      } else {
        throw DataError(source_name, line, "unknown strategy key '" + key + "'");
      }
    } else if (section == "thresholds") {
      ComparabilityThreshold thr;
      if (value.rfind("i:", 0) == 0) {
        thr.fraction = static_cast<int>(
            need_integer(value.substr(2), source_name, line, "threshold fraction"));
      } else if (value.rfind("l:", 0) == 0) {
        thr.limit = need_number(value.substr(2), source_name, line, "threshold limit");
      } else {
        throw DataError(source_name, line,
                        "thresholds look like 'i:<fraction>' or 'l:<limit>'");
      }
      job.thresholds[key] = thr;
    } else if (section == "run") {
      if (key == "replications") {
        job.replications = static_cast<int>(
            need_integer(value, source_name, line, "replications"));
      } else if (key == "seed") {
        errno = 0;
        char* end = nullptr;
        const unsigned long long seed = std::strtoull(value.c_str(), &end, 10);
        if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE)
          throw DataError(source_name, line,
                          "seed must be a decimal 64-bit integer");
        job.seed = seed;
      } else if (key == "mode") {
        if (value == "replications") {
          job.compare_mode = false;
        } else if (value == "compare") {
          job.compare_mode = true;
        } else {
          throw DataError(source_name, line, "mode is 'replications' or 'compare'");
        }
      } else if (key == "observed") {
        job.observed = value;
      } else {
        throw DataError(source_name, line, "unknown run key '" + key + "'");
      }
    } else {
      throw DataError(source_name, line, "key outside of any section");
    }
  }

  if (!correlations.empty()) {
    const std::size_t m = job.population.factors.size();
    job.population.latent_correlation.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) job.population.latent_correlation[i][i] = 1.0;
    for (const CorrelationEntry& c : correlations) {
      const std::size_t i = factor_index(c.a);
      const std::size_t j = factor_index(c.b);
      if (i == m)
        throw DataError(source_name, c.line, "unknown factor '" + c.a + "'");
      if (j == m)
        throw DataError(source_name, c.line, "unknown factor '" + c.b + "'");
      if (i == j)
        throw DataError(source_name, c.line,
                        "correlation of a factor with itself is fixed at 1");
      job.population.latent_correlation[i][j] = c.rho;
      job.population.latent_correlation[j][i] = c.rho;
    }
  }
  if (job.compare_mode && job.observed.empty())
    throw DataError(source_name + ": compare mode needs 'observed = <factor>' in [run]");
  return job;
}

SimulateJob load_simulate_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  return parse_simulate_config(in, path);
}

}  // namespace balancelab

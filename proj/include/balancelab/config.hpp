#ifndef BALANCELAB_CONFIG_HPP
#define BALANCELAB_CONFIG_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include "balancelab/allocation.hpp"
#include "balancelab/metrics.hpp"
#include "balancelab/simulation.hpp"

namespace balancelab {

// A parsed `simulate` configuration file. INI-like:
//
//   [population]
//   units = 50
//   ability = 0,1          # optional numeric trait: mean,sd
//   rank_factor = true     # optional ordinal rank trait
//
//   [factor gender]
//   p = 0.5
//
//   [correlation]
//   gender smoker = 0.8
//
//   [strategy]
//   kind = complete-random | matched-pairs | minimization | systematic
//   weights = gender:1,smoker:0
//   biased_coin = 0.9
//   budget = 1000
//
//   [thresholds]
//   gender = i:5           # fraction rule |D| <= n/i
//   ability = l:0.5        # direct bound on the statistic
//
//   [run]
//   replications = 1000
//   seed = 1
//   mode = replications | compare
//   observed = gender      # compare mode only
//
// '#' starts a comment. Unknown sections or keys raise DataError.
struct SimulateJob {
  PopulationSpec population;
  StrategyConfig strategy;
  std::map<std::string, ComparabilityThreshold> thresholds;
  int replications = 1000;
  std::uint64_t seed = 0;
  bool compare_mode = false;
  std::string observed;
};

SimulateJob load_simulate_config(const std::string& path);
SimulateJob parse_simulate_config(std::istream& in, const std::string& source_name);

}  // namespace balancelab

#endif

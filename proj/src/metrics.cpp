#include "balancelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace balancelab {

int hamming_distance(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size())
    throw std::domain_error("hamming distance: profiles differ in length");
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++d;
  return d;
}

GowerDistance::GowerDistance(const Schema& schema, std::vector<double> weights,
                             std::vector<double> ranges)
    : schema_(&schema), weights_(std::move(weights)), ranges_(std::move(ranges)) {
  if (weights_.size() != schema.size() || ranges_.size() != schema.size())
    throw std::domain_error("gower distance: weights/ranges must match the schema");
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (!(weights_[j] >= 0.0))
      throw std::domain_error("gower distance: weights must be non-negative");
    if (!(ranges_[j] >= 0.0))
      throw std::domain_error("gower distance: ranges must be non-negative");
    total_weight_ += weights_[j];
  }
  if (total_weight_ <= 0.0)
    throw std::domain_error("gower distance: at least one weight must be positive");
}

GowerDistance GowerDistance::for_cohort(const Schema& schema,
                                        std::span<const Unit> units,
                                        std::vector<double> weights) {
  validate_units(schema, units);
  if (weights.empty()) {
    weights.reserve(schema.size());
    for (const AttributeSpec& a : schema.attributes()) weights.push_back(a.weight);
  }
  std::vector<double> ranges(schema.size(), 1.0);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const AttributeSpec& a = schema.at(j);
    if (a.kind != AttrKind::ordinal && a.kind != AttrKind::numeric) continue;
    if (a.range) {
      ranges[j] = a.range->second - a.range->first;
      continue;
    }
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const Unit& u : units) {
      lo = first ? u.values[j] : std::min(lo, u.values[j]);
      hi = first ? u.values[j] : std::max(hi, u.values[j]);
      first = false;
    }
    ranges[j] = first ? 0.0 : hi - lo;
  }
  return GowerDistance(schema, std::move(weights), std::move(ranges));
}

double GowerDistance::operator()(const Unit& a, const Unit& b) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < schema_->size(); ++j) {
    if (weights_[j] == 0.0) continue;
    const AttrKind kind = schema_->at(j).kind;
    double delta;
    if (kind == AttrKind::binary || kind == AttrKind::categorical) {
      delta = a.values[j] == b.values[j] ? 0.0 : 1.0;
    } else {
      // Zero-range attributes are constant over the reference cohort and
      // count as perfectly similar (their weight stays in the denominator).
      delta = ranges_[j] > 0.0 ? std::fabs(a.values[j] - b.values[j]) / ranges_[j]
                               : 0.0;
    }
    acc += weights_[j] * delta;
  }
  return acc / total_weight_;
}

namespace {

// Midranks (ties share the average rank) of column j over the whole cohort.
std::vector<double> midranks(std::span<const Unit> units, std::size_t j) {
  const std::size_t n = units.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return units[a].values[j] < units[b].values[j];
  });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t k = i;
    while (k + 1 < n &&
           units[order[k + 1]].values[j] == units[order[i]].values[j])
      ++k;
    const double shared = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(k + 1));
    for (std::size_t t = i; t <= k; ++t) rank[order[t]] = shared;
    i = k + 1;
  }
  return rank;
}

// Enumerate size-nu index subsets of 0..count-1 in lexicographic order.
void for_each_subset(std::size_t count, std::size_t nu,
                     const std::function<void(const std::vector<std::size_t>&)>& fn) {
  if (nu == 0 || nu > count) return;
  std::vector<std::size_t> pick(nu);
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  while (true) {
    fn(pick);
    std::size_t i = nu;
    while (i > 0 && pick[i - 1] == count - nu + (i - 1)) --i;
    if (i == 0) return;
    ++pick[i - 1];
    for (std::size_t t = i; t < nu; ++t) pick[t] = pick[t - 1] + 1;
  }
}

}  // namespace

ImbalanceReport imbalance_report(const Schema& schema, std::span<const Unit> units,
                                 const Allocation& allocation,
                                 int interaction_order) {
  validate_units(schema, units);
  if (interaction_order < 1)
    throw std::domain_error("imbalance report: interaction order must be at least 1");

  ImbalanceReport report;
  std::vector<Arm> arms(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) {
    arms[u] = allocation.arm_of(units[u].id);  // throws when unassigned
    (arms[u] == Arm::treatment ? report.arm_treatment : report.arm_control)++;
  }
  if (report.arm_treatment == 0 || report.arm_control == 0)
    throw std::domain_error("imbalance report: both arms must be non-empty");

  std::vector<std::size_t> discrete;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const AttributeSpec& a = schema.at(j);
    switch (a.kind) {
      case AttrKind::binary: {
        BinaryImbalance b{a.name, 0};
        for (std::size_t u = 0; u < units.size(); ++u)
          if (units[u].values[j] == 1.0)
            b.diff += arms[u] == Arm::treatment ? 1 : -1;
        report.binary.push_back(std::move(b));
        discrete.push_back(j);
        break;
      }
      case AttrKind::categorical: {
        CategoricalImbalance c;
        c.factor = a.name;
        std::vector<int> diff(a.levels.size(), 0);
        for (std::size_t u = 0; u < units.size(); ++u)
          diff[static_cast<std::size_t>(units[u].values[j])] +=
              arms[u] == Arm::treatment ? 1 : -1;
        for (std::size_t l = 0; l < a.levels.size(); ++l) {
          c.level_diffs.emplace_back(a.levels[l], diff[l]);
          c.max_abs_diff = std::max(c.max_abs_diff, std::abs(diff[l]));
        }
        report.categorical.push_back(std::move(c));
        discrete.push_back(j);
        break;
      }
      case AttrKind::ordinal: {
        const std::vector<double> rank = midranks(units, j);
        double sum_t = 0.0, sum_c = 0.0;
        for (std::size_t u = 0; u < units.size(); ++u)
          (arms[u] == Arm::treatment ? sum_t : sum_c) += rank[u];
        report.ordinal.push_back({a.name, sum_t - sum_c});
        break;
      }
      case AttrKind::numeric: {
        double sum_t = 0.0, sum_c = 0.0, sum = 0.0, sum_sq = 0.0;
        for (std::size_t u = 0; u < units.size(); ++u) {
          const double v = units[u].values[j];
          (arms[u] == Arm::treatment ? sum_t : sum_c) += v;
          sum += v;
          sum_sq += v * v;
        }
        const double n = static_cast<double>(units.size());
        const double mean = sum / n;
        const double var = std::max(0.0, sum_sq / n - mean * mean);
        const double sd = std::sqrt(var);
        const double q = sum_t / static_cast<double>(report.arm_treatment) -
                         sum_c / static_cast<double>(report.arm_control);
        report.numeric.push_back({a.name, q, sd > 0.0 ? q / sd : 0.0});
        break;
      }
    }
  }

  if (interaction_order > 1) {
    if (static_cast<std::size_t>(interaction_order) > discrete.size())
      throw std::domain_error(
          "imbalance report: interaction order exceeds the number of discrete factors");
    for (int nu = 2; nu <= interaction_order; ++nu) {
      for_each_subset(discrete.size(), static_cast<std::size_t>(nu),
                      [&](const std::vector<std::size_t>& pick) {
        std::vector<std::size_t> attrs(pick.size());
        std::vector<std::size_t> radix(pick.size());
        std::size_t cells = 1;
        for (std::size_t t = 0; t < pick.size(); ++t) {
          attrs[t] = discrete[pick[t]];
          radix[t] = schema.level_count(attrs[t]);
          cells *= radix[t];
        }
        std::vector<int> diff(cells, 0);
        for (std::size_t u = 0; u < units.size(); ++u) {
          std::size_t cell = 0;
          for (std::size_t t = 0; t < attrs.size(); ++t)
            cell = cell * radix[t] +
                   static_cast<std::size_t>(units[u].values[attrs[t]]);
          diff[cell] += arms[u] == Arm::treatment ? 1 : -1;
        }
        for (std::size_t cell = 0; cell < cells; ++cell) {
          InteractionCell ic;
          std::size_t rem = cell;
          std::vector<int> level(attrs.size());
          for (std::size_t t = attrs.size(); t > 0; --t) {
            level[t - 1] = static_cast<int>(rem % radix[t - 1]);
            rem /= radix[t - 1];
          }
          for (std::size_t t = 0; t < attrs.size(); ++t) {
            ic.factors.push_back(schema.at(attrs[t]).name);
            ic.levels.push_back(schema.level_name(attrs[t], level[t]));
          }
          ic.diff = diff[cell];
          report.interactions.push_back(std::move(ic));
        }
      });
    }
  }
  return report;
}

ComparabilityVerdict is_comparable(
    const Schema& schema, const ImbalanceReport& report,
    const std::map<std::string, ComparabilityThreshold>& thresholds) {
  ComparabilityVerdict verdict;
  const long long two_n =
      static_cast<long long>(report.arm_treatment + report.arm_control);
  const double n = 0.5 * static_cast<double>(two_n);

  for (const auto& [name, thr] : thresholds) {
    auto idx = schema.index_of(name);
    if (!idx) throw std::domain_error("thresholds: unknown factor '" + name + "'");
    if (thr.fraction < 0 || (thr.fraction == 0 && !(thr.limit > 0.0)))
      throw std::domain_error("thresholds: factor '" + name +
                              "' needs a positive fraction i or limit l");
    const AttrKind kind = schema.at(*idx).kind;
    FactorVerdict fv;
    fv.factor = name;
    switch (kind) {
      case AttrKind::binary:
      case AttrKind::categorical: {
        int stat = 0;
        if (kind == AttrKind::binary) {
          for (const auto& b : report.binary)
            if (b.factor == name) stat = std::abs(b.diff);
        } else {
          for (const auto& c : report.categorical)
            if (c.factor == name) stat = c.max_abs_diff;
        }
        fv.statistic = stat;
        if (thr.fraction > 0) {
          fv.bound = n / thr.fraction;
          // |d| <= n/i without rounding: 2|d|i <= 2n in integers.
          fv.within = 2LL * stat * thr.fraction <= two_n;
        } else {
          fv.bound = thr.limit;
          fv.within = stat <= thr.limit;
        }
        break;
      }
      case AttrKind::ordinal: {
        double stat = 0.0;
        for (const auto& o : report.ordinal)
          if (o.factor == name) stat = std::fabs(o.rank_sum_diff);
        fv.statistic = stat;
        if (thr.fraction > 0) {
          fv.bound = n * n / thr.fraction;
          // |rsd| <= n^2/i as 4|rsd|i <= (2n)^2; midranks make 4|rsd| an
          // exactly representable integer, so this stays exact too.
          fv.within = 4.0 * stat * thr.fraction <=
                      static_cast<double>(two_n) * static_cast<double>(two_n);
        } else {
          fv.bound = thr.limit;
          fv.within = stat <= thr.limit;
        }
        break;
      }
      case AttrKind::numeric: {
        if (thr.fraction > 0)
          throw std::domain_error("thresholds: numeric factor '" + name +
                                  "' takes a direct bound l, not a fraction");
        double stat = 0.0;
        for (const auto& m : report.numeric)
          if (m.factor == name) stat = std::fabs(m.mean_diff);
        fv.statistic = stat;
        fv.bound = thr.limit;
        fv.within = stat <= thr.limit;
        break;
      }
    }
    verdict.comparable = verdict.comparable && fv.within;
    verdict.factors.push_back(std::move(fv));
  }
  return verdict;
}

}  // namespace balancelab

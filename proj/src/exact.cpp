#include "balancelab/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

namespace balancelab {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::domain_error(msg);
}

// log C(n, k) for 0 <= k <= n.
double lchoose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Sample-size formulas are evaluated in floating point from decimal inputs,
// so an exact-integer answer can land a few ulp above it (e.g. 0.32 * 900 =
// 288.00000000000006). Snap to the nearest integer when within 1e-9
// relative, otherwise take the ceiling; never below 1.
long long snap_ceil(double v) {
  require(std::isfinite(v), "sample size formula overflowed");
  double nearest = std::round(v);
  double tol = 1e-9 * std::max(1.0, std::fabs(v));
  double out = (std::fabs(v - nearest) <= tol) ? nearest : std::ceil(v);
  return std::max(1LL, static_cast<long long>(out));
}

}  // namespace

BinaryModel::BinaryModel(int n_, double p_) : n(n_), p(p_) {
  require(n >= 1, "binary model: group size n must be at least 1");
  require(std::isfinite(p) && p >= 0.0 && p <= 1.0,
          "binary model: prevalence p must lie in [0, 1]");
}

RankModel::RankModel(int n_) : n(n_) {
  require(n >= 1, "rank model: group size n must be at least 1");
  require(n <= 100, "rank model: exact table is limited to n <= 100");
}

ContinuousModel::ContinuousModel(int n_, double sigma_) : n(n_), sigma(sigma_) {
  require(n >= 1, "continuous model: group size n must be at least 1");
  require(std::isfinite(sigma) && sigma > 0.0,
          "continuous model: sigma must be positive");
}

// --- binary trait ---------------------------------------------------------

double binary_imbalance_pmf(const BinaryModel& model, int d) {
  const int n = model.n;
  require(d >= -n && d <= n, "binary pmf: |d| cannot exceed n");
  const double p = model.p;
  if (p == 0.0 || p == 1.0) return d == 0 ? 1.0 : 0.0;

  // P(D = d) = sum_y C(n, y) C(n, y - d) p^(2y-d) (1-p)^(2n-2y+d),
  // accumulated in log space to keep tails honest.
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  const int y_lo = std::max(0, d);
  const int y_hi = std::min(n, n + d);
  double max_log = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  logs.reserve(static_cast<std::size_t>(y_hi - y_lo + 1));
  for (int y = y_lo; y <= y_hi; ++y) {
    double t = lchoose(n, y) + lchoose(n, y - d) + (2 * y - d) * lp +
               (2 * n - 2 * y + d) * lq;
    logs.push_back(t);
    max_log = std::max(max_log, t);
  }
  double acc = 0.0;
  for (double t : logs) acc += std::exp(t - max_log);
  return std::exp(max_log) * acc;
}

std::vector<double> detail::binary_pmf_table(const BinaryModel& model) {
  std::vector<double> out(static_cast<std::size_t>(2 * model.n + 1));
  for (int d = -model.n; d <= model.n; ++d)
    out[static_cast<std::size_t>(d + model.n)] = binary_imbalance_pmf(model, d);
  return out;
}

double binary_comparability_prob(int i, const BinaryModel& model) {
  require(i >= 1 && i <= model.n, "comparability fraction i must lie in [1, n]");
  // |d| <= n/i for integer d is exactly d*i <= n; keep the bound in
  // integers so boundary cases never fall to rounding.
  const int d_max = model.n / i;
  double acc = binary_imbalance_pmf(model, 0);
  for (int d = 1; d <= d_max; ++d) {
    acc += binary_imbalance_pmf(model, d);
    acc += binary_imbalance_pmf(model, -d);
  }
  return std::min(acc, 1.0);
}

long long binary_sample_size(int i, double k, double p) {
  require(i >= 1, "sample size: fraction i must be at least 1");
  require(std::isfinite(k) && k > 0.0, "sample size: margin k must be positive");
  require(std::isfinite(p) && p >= 0.0 && p <= 1.0,
          "sample size: prevalence p must lie in [0, 1]");
  const double ik = static_cast<double>(i) * k;
  return snap_ceil(2.0 * p * (1.0 - p) * ik * ik);
}

// --- several independent traits -------------------------------------------

double joint_comparability(std::span<const double> factor_probs) {
  double acc = 1.0;
  for (double q : factor_probs) {
    require(std::isfinite(q) && q >= 0.0 && q <= 1.0,
            "joint comparability: factor probabilities must lie in [0, 1]");
    acc *= q;
  }
  return acc;
}

double joint_noncomparability(std::span<const double> factor_probs) {
  return 1.0 - joint_comparability(factor_probs);
}

// --- rank / ordered trait --------------------------------------------------

namespace {

// Distribution of U = S1 - n(n+1)/2 (the Mann-Whitney count) over all
// C(2n, n) equally likely splits of ranks 1..2n: P(U = u) for u = 0..n^2.
// The counts are the coefficients of the Gaussian binomial (2n choose n)_q,
// built exactly in big integers and divided down to doubles once at the end.
struct RankTable {
  std::vector<double> prob;  // index u
};

const RankTable& rank_table(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<RankTable>> cache;
  std::scoped_lock lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return *it->second;

  using boost::multiprecision::cpp_int;
  // Product form prod_{j=1..n} (1 - q^(n+j)) / (1 - q^j). Multiplications
  // run top-down (new coefficients depend on untouched lower ones), exact
  // polynomial divisions run bottom-up.
  const int top_degree = n * n + n;
  std::vector<cpp_int> coef(static_cast<std::size_t>(top_degree + 1));
  coef[0] = 1;
  int degree = 0;
  for (int j = 1; j <= n; ++j) {
    degree += n + j;
    for (int t = degree; t >= n + j; --t)
      coef[static_cast<std::size_t>(t)] -= coef[static_cast<std::size_t>(t - (n + j))];
    for (int t = j; t <= degree; ++t)
      coef[static_cast<std::size_t>(t)] += coef[static_cast<std::size_t>(t - j)];
    degree -= j;
  }
  // degree is now n^2; everything above it divided away exactly.
  cpp_int total = 0;
  for (int u = 0; u <= n * n; ++u) total += coef[static_cast<std::size_t>(u)];

  auto table = std::make_unique<RankTable>();
  table->prob.resize(static_cast<std::size_t>(n * n + 1));
  const double denom = total.convert_to<double>();
  for (int u = 0; u <= n * n; ++u)
    table->prob[static_cast<std::size_t>(u)] =
        coef[static_cast<std::size_t>(u)].convert_to<double>() / denom;
  auto [pos, inserted] = cache.emplace(n, std::move(table));
  (void)inserted;
  return *pos->second;
}

}  // namespace

double rank_imbalance_pmf(const RankModel& model, int d) {
  const int nn = model.n * model.n;
  require(d >= -nn && d <= nn, "rank pmf: |d| cannot exceed n^2");
  // D = 2U - n^2, so D shares the parity of n^2 and off-parity values are
  // simply impossible, not errors.
  if (((d + nn) & 1) != 0) return 0.0;
  return rank_table(model.n).prob[static_cast<std::size_t>((d + nn) / 2)];
}

std::vector<std::pair<int, double>> detail::rank_pmf_table(const RankModel& model) {
  const int nn = model.n * model.n;
  const auto& table = rank_table(model.n);
  std::vector<std::pair<int, double>> out;
  out.reserve(table.prob.size());
  for (int u = 0; u <= nn; ++u)
    out.emplace_back(2 * u - nn, table.prob[static_cast<std::size_t>(u)]);
  return out;
}

double rank_comparability_prob(int i, const RankModel& model) {
  const int nn = model.n * model.n;
  require(i >= 1 && i <= nn, "comparability fraction i must lie in [1, n^2]");
  const auto& table = rank_table(model.n);
  double acc = 0.0;
  for (int u = 0; u <= nn; ++u) {
    const long long d = 2LL * u - nn;
    if (std::llabs(d) * i <= nn)  // integer-exact |D| <= n^2 / i
      acc += table.prob[static_cast<std::size_t>(u)];
  }
  return std::min(acc, 1.0);
}

long long rank_sample_size(int i, double k) {
  require(i >= 1, "sample size: fraction i must be at least 1");
  require(std::isfinite(k) && k > 0.0, "sample size: margin k must be positive");
  const double x = static_cast<double>(i) * k;
  return snap_ceil(x * (x + std::sqrt(x * x + 3.0)) / 3.0);
}

// --- continuous trait ------------------------------------------------------

double continuous_comparability_prob(double l, const ContinuousModel& model,
                                     ImbalanceScale scale) {
  require(std::isfinite(l) && l > 0.0, "comparability bound l must be positive");
  const double n = static_cast<double>(model.n);
  // Relative: |Q| <= l sigma with Q ~ N(0, sigma sqrt(2/n)).
  // Absolute: |D| <= l sigma with D ~ N(0, sigma sqrt(2n)).
  const double z = scale == ImbalanceScale::relative ? l * std::sqrt(n / 2.0)
                                                     : l / std::sqrt(2.0 * n);
  return 2.0 * normal_cdf(z) - 1.0;
}

long long continuous_sample_size(double l, double k) {
  require(std::isfinite(l) && l > 0.0, "sample size: bound l must be positive");
  require(std::isfinite(k) && k > 0.0, "sample size: margin k must be positive");
  return snap_ceil(2.0 * k * k / (l * l));
}

// --- significance of a clean sweep ----------------------------------------

double sign_test_pvalue(int n) {
  require(n >= 1, "sign test: pair count must be at least 1");
  require(n <= 1074, "sign test: p-value underflows double for n > 1074");
  return std::ldexp(1.0, -n);
}

// --- numeric utilities ------------------------------------------------------

namespace detail {
namespace {

constexpr double kInvSqrtPi = 5.6418958354775628695e-1;

// erfc on (0.46875, inf). Part of Cody's rational Chebyshev scheme; the
// exp(-y^2) factor is split around a 1/16-grid point to keep it accurate.
double erfc_tail(double y) {
  if (y > 26.6) return 0.0;  // below double underflow for erfc
  double r;
  if (y <= 4.0) {
    static constexpr double c[9] = {
        5.64188496988670089e-1, 8.88314979438837594e00, 6.61191906371416295e01,
        2.98635138197400131e02, 8.81952221241769090e02, 1.71204761263407058e03,
        2.05107837782607147e03, 1.23033935479799725e03, 2.15311535474403846e-8};
    static constexpr double d[8] = {
        1.57449261107098347e01, 1.17693950891312499e02, 5.37181101862009858e02,
        1.62138957456669019e03, 3.29079923573345963e03, 4.36261909014324716e03,
        3.43936767414372164e03, 1.23033935480374942e03};
    double xnum = c[8] * y;
    double xden = y;
    for (int i = 0; i < 7; ++i) {
      xnum = (xnum + c[i]) * y;
      xden = (xden + d[i]) * y;
    }
    r = (xnum + c[7]) / (xden + d[7]);
  } else {
    static constexpr double p[6] = {
        3.05326634961232344e-1, 3.60344899949804439e-1, 1.25781726111229246e-1,
        1.60837851487422766e-2, 6.58749161529837803e-4, 1.63153871373020978e-2};
    static constexpr double q[5] = {2.56852019228982242e00, 1.87295284992346047e00,
                                    5.27905102951428412e-1, 6.05183413124413191e-2,
                                    2.33520497626869185e-3};
    const double ysq = 1.0 / (y * y);
    double xnum = p[5] * ysq;
    double xden = ysq;
    for (int i = 0; i < 4; ++i) {
      xnum = (xnum + p[i]) * ysq;
      xden = (xden + q[i]) * ysq;
    }
    r = ysq * (xnum + p[4]) / (xden + q[4]);
    r = (kInvSqrtPi - r) / y;
  }
  const double y16 = std::trunc(y * 16.0) / 16.0;
  const double del = (y - y16) * (y + y16);
  return std::exp(-y16 * y16) * std::exp(-del) * r;
}

}  // namespace

double erf_cody(double x) {
  const double y = std::fabs(x);
  if (y <= 0.46875) {
    static constexpr double a[5] = {3.16112374387056560e00, 1.13864154151050156e02,
                                    3.77485237685302021e02, 3.20937758913846947e03,
                                    1.85777706184603153e-1};
    static constexpr double b[4] = {2.36012909523441209e01, 2.44024637934444173e02,
                                    1.28261652607737228e03, 2.84423683343917062e03};
    const double z = y > 1.11e-16 ? y * y : 0.0;
    double xnum = a[4] * z;
    double xden = z;
    for (int i = 0; i < 3; ++i) {
      xnum = (xnum + a[i]) * z;
      xden = (xden + b[i]) * z;
    }
    return x * (xnum + a[3]) / (xden + b[3]);
  }
  const double e = erfc_tail(y);
  return x < 0.0 ? e - 1.0 : 1.0 - e;
}

double erfc_cody(double x) {
  const double y = std::fabs(x);
  if (y <= 0.46875) return 1.0 - erf_cody(x);
  const double e = erfc_tail(y);
  return x < 0.0 ? 2.0 - e : e;
}

}  // namespace detail

double normal_cdf(double x) {
  constexpr double inv_sqrt2 = 7.0710678118654752440e-1;
  return 0.5 * detail::erfc_cody(-x * inv_sqrt2);
}

double normal_quantile(double p) {
  require(std::isfinite(p) && p > 0.0 && p < 1.0,
          "normal quantile: p must lie strictly between 0 and 1");
  // Bisection against the Cody CDF: slower than a rational inverse but
  // exactly as portable as the CDF itself, and this path is never hot.
  double lo = -40.0, hi = 40.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15 * std::max(1.0, std::fabs(lo))) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace balancelab

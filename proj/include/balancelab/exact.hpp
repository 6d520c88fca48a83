#ifndef BALANCELAB_EXACT_HPP
#define BALANCELAB_EXACT_HPP

#include <span>
#include <utility>
#include <vector>

namespace balancelab {

// Two equal arms of n units each. p is the prevalence of the trait.
struct BinaryModel {
  int n;
  double p;
  BinaryModel(int n, double p);
};

// Ranks 1..2n split into two arms of n. Exact distribution is tabulated up
// to n = 100; larger n throws.
struct RankModel {
  int n;
  explicit RankModel(int n);
};

// A continuous trait with standard deviation sigma, arms of n units each.
struct ContinuousModel {
  int n;
  double sigma;
  explicit ContinuousModel(int n, double sigma = 1.0);
};

// Whether a continuous bound l applies to the mean difference Q = D/n
// (relative) or to the raw sum difference D (absolute).
enum class ImbalanceScale { relative, absolute };

// --- binary trait ---------------------------------------------------------

// P(D = d) where D = S1 - S2, S1 and S2 independent Binomial(n, p).
double binary_imbalance_pmf(const BinaryModel& model, int d);

// q(i, n, p) = P(|D| <= n/i): probability the arms differ by at most a
// 1/i fraction of the arm size. i in [1, n].
double binary_comparability_prob(int i, const BinaryModel& model);

// Smallest arm size with sigma-rule margin k at fraction 1/i:
// ceil(2 p (1-p) i^2 k^2), at least 1.
long long binary_sample_size(int i, double k, double p);

// --- several independent traits -------------------------------------------

// Probability all m factors are simultaneously comparable: product of the
// per-factor probabilities (empty list -> 1).
double joint_comparability(std::span<const double> factor_probs);
double joint_noncomparability(std::span<const double> factor_probs);

// --- rank / ordered trait --------------------------------------------------

// P(D = d) where D = (rank sum of arm 1) - (rank sum of arm 2) over all
// equally likely splits of ranks 1..2n. D has the parity of n^2 and lies in
// [-n^2, n^2]; off-support d yields 0, |d| > n^2 throws.
double rank_imbalance_pmf(const RankModel& model, int d);

// q(i, n) = P(|D| <= n^2 / i), i in [1, n^2].
double rank_comparability_prob(int i, const RankModel& model);

// Closed-form minimum n with n^2/i >= k * sigma(D), sigma(D)^2 = n^2(2n+1)/3:
// ceil( ik (ik + sqrt((ik)^2 + 3)) / 3 ), at least 1.
long long rank_sample_size(int i, double k);

// --- continuous trait ------------------------------------------------------

// Relative scale: P(|Q| <= l * sigma) = 2 Phi(l sqrt(n/2)) - 1.
// Absolute scale: P(|D| <= l * sigma) = 2 Phi(l / sqrt(2n)) - 1.
double continuous_comparability_prob(double l, const ContinuousModel& model,
                                     ImbalanceScale scale = ImbalanceScale::relative);

// Smallest n with relative bound l at sigma-rule margin k:
// ceil(2 k^2 / l^2), at least 1.
long long continuous_sample_size(double l, double k);

// --- significance of a clean sweep ----------------------------------------

// Sign-test p-value for n pairs all favoring the same pre-specified arm
// under a fair coin: exactly 2^-n (computed with ldexp, no rounding).
double sign_test_pvalue(int n);

// --- numeric utilities ------------------------------------------------------

// Standard normal CDF via Cody's rational Chebyshev erf/erfc approximation
// (deterministic across libm implementations, abs error < 1e-15).
double normal_cdf(double x);

// Inverse of normal_cdf by bisection; p in (0, 1).
double normal_quantile(double p);

namespace detail {
double erf_cody(double x);
double erfc_cody(double x);
// Full PMF over d = -n..n (index d + n), exposed for the pmf CLI op.
std::vector<double> binary_pmf_table(const BinaryModel& model);
// Support and probabilities for the rank difference D: pairs (d, P(D=d))
// in increasing d, only parity-admissible d.
std::vector<std::pair<int, double>> rank_pmf_table(const RankModel& model);
}  // namespace detail

}  // namespace balancelab

#endif

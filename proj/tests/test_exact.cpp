#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "balancelab/exact.hpp"
#include "balancelab/rng.hpp"

using namespace balancelab;

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// Direct-power evaluation of P(D = d), no log-space tricks: an independent
// implementation path for small n where the powers cannot underflow.
double binary_pmf_direct(int n, double p, int d) {
  std::vector<std::vector<double>> choose(n + 1, std::vector<double>(n + 1, 0.0));
  for (int a = 0; a <= n; ++a) {
    choose[a][0] = 1.0;
    for (int b = 1; b <= a; ++b)
      choose[a][b] = choose[a - 1][b - 1] + (b <= a - 1 ? choose[a - 1][b] : 0.0);
  }
  double total = 0.0;
  for (int s1 = 0; s1 <= n; ++s1) {
    const int s2 = s1 - d;
    if (s2 < 0 || s2 > n) continue;
    total += choose[n][s1] * std::pow(p, s1) * std::pow(1.0 - p, n - s1) *
             choose[n][s2] * std::pow(p, s2) * std::pow(1.0 - p, n - s2);
  }
  return total;
}

// Exhaustive rank-difference counts for 2n <= 24: every split of ranks
// 1..2n into two halves, tallied by D = 2*ranksum(arm 1) - n(2n+1).
std::map<int, std::uint64_t> rank_counts_direct(int n) {
  std::map<int, std::uint64_t> counts;
  const int bits = 2 * n;
  for (std::uint32_t mask = 0; mask < (1u << bits); ++mask) {
    if (__builtin_popcount(mask) != n) continue;
    int rank_sum = 0;
    for (int b = 0; b < bits; ++b)
      if (mask & (1u << b)) rank_sum += b + 1;
    ++counts[2 * rank_sum - n * (2 * n + 1)];
  }
  return counts;
}

// First n where the deterministic bound n/i reaches k standard deviations of
// D. Exact integer arithmetic with rational prevalence p = p_num / p_den:
//   n/i >= k sqrt(2 p (1-p) n)  <=>  n p_den^2 >= 2 i^2 k^2 p_num (p_den - p_num)
long long binary_crossing_direct(long long i, long long k, long long p_num,
                                 long long p_den) {
  const long long rhs = 2 * i * i * k * k * p_num * (p_den - p_num);
  long long n = 1;
  while (n * p_den * p_den < rhs) ++n;
  return n;
}

// Rank analogue: n^2/i >= k sigma(D), sigma(D)^2 = n^2 (2n+1) / 3, i.e.
// 3 n^2 >= (ik)^2 (2n+1).
long long rank_crossing_direct(long long i, long long k) {
  const long long ik2 = i * i * k * k;
  long long n = 1;
  while (3 * n * n < ik2 * (2 * n + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("binary comparability probabilities match the reference grid") {
  struct Row {
    double p;
    int n;
    double q;
  };
  // Reference values computed with 50-digit arbitrary-precision arithmetic.
  const Row rows[] = {
      {0.5, 5, 0.65625},         {0.5, 10, 0.7368240356},
      {0.5, 25, 0.8810795474},   {0.5, 50, 0.9647997998},
      {0.1, 5, 0.8981139232},    {0.1, 10, 0.9404872241},
      {0.1, 25, 0.9899917452},   {0.1, 50, 0.9994490275},
      {0.01, 5, 0.9981348286},   {0.01, 10, 0.9997937080},
      {0.01, 25, 0.9999997644},
  };
  for (const Row& row : rows) {
    CAPTURE(row.p);
    CAPTURE(row.n);
    CHECK(near(binary_comparability_prob(5, BinaryModel(row.n, row.p)), row.q, 1e-9));
  }
}

TEST_CASE("binary pmf: exact value, symmetry, normalization") {
  const BinaryModel m(5, 0.5);
  CHECK(near(binary_imbalance_pmf(m, 0), 252.0 / 1024.0, 1e-13));
  for (const double p : {0.1, 0.3, 0.5, 0.9}) {
    const BinaryModel model(7, p);
    const BinaryModel mirror(7, 1.0 - p);
    double total = 0.0;
    for (int d = -7; d <= 7; ++d) {
      total += binary_imbalance_pmf(model, d);
      CHECK(near(binary_imbalance_pmf(model, d), binary_imbalance_pmf(model, -d),
                 1e-15));
      // The difference of two iid counts is blind to which level is "present".
      CHECK(near(binary_imbalance_pmf(model, d), binary_imbalance_pmf(mirror, d),
                 1e-15));
    }
    CAPTURE(p);
    CHECK(near(total, 1.0, 1e-12));
  }
}

TEST_CASE("binary pmf and q agree with direct enumeration for small n") {
  for (int n = 1; n <= 8; ++n) {
    for (const double p : {0.1, 0.5, 0.9}) {
      const BinaryModel model(n, p);
      for (int d = -n; d <= n; ++d) {
        CAPTURE(n);
        CAPTURE(p);
        CAPTURE(d);
        CHECK(near(binary_imbalance_pmf(model, d), binary_pmf_direct(n, p, d),
                   1e-12));
      }
      for (int i = 1; i <= n; ++i) {
        double q_direct = 0.0;
        for (int d = -n; d <= n; ++d)
          if (std::abs(d) * i <= n) q_direct += binary_pmf_direct(n, p, d);
        CHECK(near(binary_comparability_prob(i, model), q_direct, 1e-12));
      }
    }
  }
}

TEST_CASE("degenerate prevalences concentrate all mass at zero imbalance") {
  for (const double p : {0.0, 1.0}) {
    const BinaryModel model(10, p);
    CHECK(binary_imbalance_pmf(model, 0) == 1.0);
    CHECK(binary_imbalance_pmf(model, 1) == 0.0);
    CHECK(binary_comparability_prob(10, model) == 1.0);
  }
}

TEST_CASE("binary q is monotone: up in n, down in i, down toward p = 1/2") {
  const int ns[] = {5, 10, 25, 50};
  for (std::size_t j = 1; j < 4; ++j)
    CHECK(binary_comparability_prob(5, BinaryModel(ns[j], 0.5)) >
          binary_comparability_prob(5, BinaryModel(ns[j - 1], 0.5)));
  for (int i = 2; i <= 10; ++i)
    CHECK(binary_comparability_prob(i, BinaryModel(50, 0.3)) <=
          binary_comparability_prob(i - 1, BinaryModel(50, 0.3)));
  CHECK(binary_comparability_prob(5, BinaryModel(25, 0.1)) >
        binary_comparability_prob(5, BinaryModel(25, 0.5)));
}

TEST_CASE("binary model and fraction validation") {
  CHECK_THROWS_AS(BinaryModel(0, 0.5), std::domain_error);
  CHECK_THROWS_AS(BinaryModel(5, -0.1), std::domain_error);
  CHECK_THROWS_AS(BinaryModel(5, 1.1), std::domain_error);
  const BinaryModel m(5, 0.5);
  CHECK_THROWS_AS(binary_comparability_prob(0, m), std::domain_error);
  CHECK_THROWS_AS(binary_comparability_prob(6, m), std::domain_error);
  CHECK_THROWS_AS(binary_imbalance_pmf(m, 6), std::domain_error);
  CHECK_THROWS_AS(binary_imbalance_pmf(m, -6), std::domain_error);
}

TEST_CASE("binary sample sizes reproduce the reference tables") {
  // Rows are fixed (i, k); columns run p = 1/2, 1/5, 1/10, 1/100.
  CHECK(binary_sample_size(10, 3, 0.5) == 450);
  CHECK(binary_sample_size(10, 3, 0.2) == 288);  // 0.32 * 900 lands on 288 + eps
  CHECK(binary_sample_size(10, 3, 0.1) == 162);
  CHECK(binary_sample_size(10, 3, 0.01) == 18);
  CHECK(binary_sample_size(5, 3, 0.5) == 113);
  CHECK(binary_sample_size(5, 3, 0.2) == 72);
  CHECK(binary_sample_size(5, 3, 0.1) == 41);
  CHECK(binary_sample_size(5, 3, 0.01) == 5);
  CHECK(binary_sample_size(10, 2, 0.5) == 200);
  CHECK(binary_sample_size(10, 2, 0.2) == 128);
  CHECK(binary_sample_size(10, 2, 0.1) == 72);
  CHECK(binary_sample_size(10, 2, 0.01) == 8);
  // Never below one unit per arm.
  CHECK(binary_sample_size(1, 1, 0.001) == 1);
  CHECK(binary_sample_size(1, 1, 0.0) == 1);
}

TEST_CASE("binary sample size equals the exact bound-crossing point") {
  struct P {
    long long num;
    long long den;
  };
  for (const long long i : {2, 5, 6, 8, 10, 15, 20, 25}) {
    for (const long long k : {1, 2, 3}) {
      for (const P p : {P{1, 2}, P{1, 5}, P{1, 10}, P{1, 100}}) {
        CAPTURE(i);
        CAPTURE(k);
        CAPTURE(p.den);
        CHECK(binary_sample_size(static_cast<int>(i), static_cast<double>(k),
                                 static_cast<double>(p.num) /
                                     static_cast<double>(p.den)) ==
              binary_crossing_direct(i, k, p.num, p.den));
      }
    }
  }
}

TEST_CASE("rank comparability probabilities match the reference grid") {
  struct Row {
    int i;
    int n;
    double q;
  };
  const Row rows[] = {
      {3, 5, 0.579365},  {3, 10, 0.782437},  {3, 25, 0.957109},
      {3, 50, 0.996209}, {3, 100, 0.999961}, {5, 5, 0.452381},
      {5, 10, 0.564128}, {5, 25, 0.776286},  {5, 50, 0.915806},
      {5, 100, 0.985721}, {10, 5, 0.158730}, {10, 10, 0.315789},
      {10, 25, 0.449268}, {10, 50, 0.611436}, {10, 100, 0.778113},
  };
  for (const Row& row : rows) {
    CAPTURE(row.i);
    CAPTURE(row.n);
    CHECK(near(rank_comparability_prob(row.i, RankModel(row.n)), row.q, 5e-7));
  }
}

TEST_CASE("rank pmf agrees with exhaustive enumeration for small n") {
  for (int n = 1; n <= 6; ++n) {
    const RankModel model(n);
    const auto counts = rank_counts_direct(n);
    std::uint64_t total = 0;
    for (const auto& [d, c] : counts) total += c;
    const auto table = detail::rank_pmf_table(model);
    REQUIRE(table.size() == counts.size());
    std::size_t idx = 0;
    for (const auto& [d, c] : counts) {
      CAPTURE(n);
      CAPTURE(d);
      CHECK(table[idx].first == d);
      CHECK(near(table[idx].second,
                 static_cast<double>(c) / static_cast<double>(total), 1e-15));
      CHECK(near(rank_imbalance_pmf(model, d),
                 static_cast<double>(c) / static_cast<double>(total), 1e-15));
      ++idx;
    }
    for (int i = 1; i <= n * n; ++i) {
      double q_direct = 0.0;
      for (const auto& [d, c] : counts)
        if (std::abs(d) * i <= n * n)
          q_direct += static_cast<double>(c) / static_cast<double>(total);
      CAPTURE(n);
      CAPTURE(i);
      CHECK(near(rank_comparability_prob(i, model), q_direct, 1e-12));
    }
  }
}

TEST_CASE("rank pmf: known small values, parity, off-support zeros") {
  const RankModel m(2);
  CHECK(near(rank_imbalance_pmf(m, 0), 1.0 / 3.0, 1e-16));
  CHECK(near(rank_imbalance_pmf(m, 4), 1.0 / 6.0, 1e-16));
  CHECK(rank_imbalance_pmf(m, 1) == 0.0);  // parity of n^2 = 4 is even
  CHECK_THROWS_AS(rank_imbalance_pmf(m, 5), std::domain_error);

  const RankModel odd(3);  // n^2 = 9: admissible d are odd
  CHECK(rank_imbalance_pmf(odd, 0) == 0.0);
  CHECK(rank_imbalance_pmf(odd, 1) > 0.0);

  double total = 0.0;
  for (const auto& [d, p] : detail::rank_pmf_table(RankModel(12))) {
    total += p;
    CHECK(near(p, rank_imbalance_pmf(RankModel(12), -d), 1e-15));
  }
  CHECK(near(total, 1.0, 1e-12));
}

TEST_CASE("rank model validation and cap") {
  CHECK_THROWS_AS(RankModel(0), std::domain_error);
  CHECK_THROWS_AS(RankModel(101), std::domain_error);
  CHECK(near(rank_comparability_prob(1, RankModel(100)), 1.0, 1e-12));
  CHECK_THROWS_AS(rank_comparability_prob(0, RankModel(5)), std::domain_error);
  CHECK_THROWS_AS(rank_comparability_prob(26, RankModel(5)), std::domain_error);
}

TEST_CASE("rank sample sizes: formula values and exact crossing points") {
  CHECK(rank_sample_size(10, 2) == 268);
  CHECK(rank_sample_size(10, 3) == 601);
  CHECK(rank_sample_size(5, 3) == 151);
  CHECK(rank_sample_size(5, 2) == 68);
  for (const long long i : {2, 3, 5, 10, 20}) {
    for (const long long k : {1, 2, 3, 5}) {
      CAPTURE(i);
      CAPTURE(k);
      CHECK(rank_sample_size(static_cast<int>(i), static_cast<double>(k)) ==
            rank_crossing_direct(i, k));
    }
  }
  CHECK(rank_sample_size(1, 0.1) == 1);
}

TEST_CASE("continuous comparability: closed form against known normal values") {
  // l sqrt(n/2) = 3 at l = 1, n = 18
  CHECK(near(continuous_comparability_prob(1.0, ContinuousModel(18)),
             0.9973002039367398, 1e-14));
  // l sqrt(n/2) = 0.5 at l = 0.5, n = 2
  CHECK(near(continuous_comparability_prob(0.5, ContinuousModel(2)),
             0.38292492254802624, 1e-14));
  // Absolute scale: l / sqrt(2n) = 0.5 at l = 3, n = 18
  CHECK(near(continuous_comparability_prob(3.0, ContinuousModel(18),
                                           ImbalanceScale::absolute),
             0.38292492254802624, 1e-14));
  // sigma scales the trait, not the bound expressed in sigma units.
  CHECK(continuous_comparability_prob(1.0, ContinuousModel(18, 2.5)) ==
        continuous_comparability_prob(1.0, ContinuousModel(18, 1.0)));
  CHECK_THROWS_AS(continuous_comparability_prob(0.0, ContinuousModel(5)),
                  std::domain_error);
  CHECK_THROWS_AS(ContinuousModel(0), std::domain_error);
  CHECK_THROWS_AS(ContinuousModel(5, -1.0), std::domain_error);
}

TEST_CASE("continuous sample sizes reproduce the reference table") {
  const double ls[] = {5.0, 2.0, 1.0, 0.5, 0.25, 0.125};
  const long long expect_k1[] = {1, 1, 2, 8, 32, 128};
  const long long expect_k2[] = {1, 2, 8, 32, 128, 512};
  const long long expect_k3[] = {1, 5, 18, 72, 288, 1152};
  const long long expect_k5[] = {2, 13, 50, 200, 800, 3200};
  for (int j = 0; j < 6; ++j) {
    CAPTURE(ls[j]);
    CHECK(continuous_sample_size(ls[j], 1.0) == expect_k1[j]);
    CHECK(continuous_sample_size(ls[j], 2.0) == expect_k2[j]);
    CHECK(continuous_sample_size(ls[j], 3.0) == expect_k3[j]);
    CHECK(continuous_sample_size(ls[j], 5.0) == expect_k5[j]);
  }
  CHECK_THROWS_AS(continuous_sample_size(0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(continuous_sample_size(1.0, 0.0), std::domain_error);
}

TEST_CASE("joint comparability is the product, bounded by the weakest factor") {
  CHECK(joint_comparability({}) == 1.0);
  const double qs[] = {0.5, 0.5, 0.5};
  CHECK(joint_comparability(qs) == 0.125);
  CHECK(joint_noncomparability(qs) == 0.875);

  const double single[] = {0.65625};
  std::vector<double> tenfold(10, 0.65625);
  CHECK(near(joint_comparability(tenfold),
             std::pow(joint_comparability(single), 10), 1e-15));

  RandomSource rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> probs;
    double lo = 1.0;
    for (int j = 0; j < 6; ++j) {
      probs.push_back(rng.next_unit());
      lo = std::min(lo, probs.back());
    }
    CHECK(joint_comparability(probs) <= lo + 1e-15);
  }
  const double bad[] = {0.5, 1.5};
  CHECK_THROWS_AS(joint_comparability(bad), std::domain_error);
}

TEST_CASE("reference power values for repeated factors") {
  const double q5_25 = binary_comparability_prob(5, BinaryModel(25, 0.5));
  std::vector<double> two(2, q5_25), five(5, q5_25), ten(10, q5_25);
  CHECK(near(joint_comparability(two), 0.77630117, 5e-8));
  CHECK(near(joint_comparability(five), 0.53097687, 5e-8));
  CHECK(near(joint_comparability(ten), 0.28193643, 5e-8));

  const double q5_5 = binary_comparability_prob(5, BinaryModel(5, 0.5));
  std::vector<double> two5(2, q5_5), five5(5, q5_5), ten5(10, q5_5);
  CHECK(near(joint_comparability(two5), 0.43066406, 5e-8));
  CHECK(near(joint_comparability(five5), 0.12171569, 5e-8));
  CHECK(near(joint_comparability(ten5), 0.01481471, 5e-8));
}

TEST_CASE("sign test p-value is an exact power of two") {
  CHECK(sign_test_pvalue(1) == 0.5);
  CHECK(sign_test_pvalue(10) == 0.0009765625);
  CHECK(sign_test_pvalue(1074) > 0.0);
  CHECK_THROWS_AS(sign_test_pvalue(0), std::domain_error);
  CHECK_THROWS_AS(sign_test_pvalue(1075), std::domain_error);
}

TEST_CASE("normal cdf, quantile, and erf agree with libm references") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(near(normal_cdf(1.0), 0.8413447460685429, 1e-15));
  CHECK(near(normal_cdf(3.0), 0.9986501019683699, 1e-15));
  CHECK(near(normal_cdf(-3.0), 1.0 - normal_cdf(3.0), 1e-16));
  CHECK(normal_cdf(50.0) == 1.0);
  CHECK(normal_cdf(-50.0) == 0.0);

  for (double x = -6.0; x <= 6.0; x += 0.0625) {
    CAPTURE(x);
    CHECK(near(detail::erf_cody(x), std::erf(x), 2e-15));
    CHECK(near(detail::erfc_cody(x), std::erfc(x),
               2e-15 * std::max(1e-3, std::erfc(x))));
  }

  for (const double p : {0.01, 0.1, 0.38292492254802624, 0.5, 0.9, 0.999}) {
    CAPTURE(p);
    CHECK(near(normal_cdf(normal_quantile(p)), p, 1e-12));
  }
  CHECK(near(normal_quantile(0.9986501019683699), 3.0, 1e-9));
  CHECK_THROWS_AS(normal_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(normal_quantile(1.0), std::domain_error);
}

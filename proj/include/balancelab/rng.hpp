#ifndef BALANCELAB_RNG_HPP
#define BALANCELAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace balancelab {

// Purpose salts for deriving independent substreams from one user seed.
// Keeping them here (rather than ad hoc constants at call sites) is what
// makes replication r reproducible regardless of which strategy consumed
// how much randomness before it.
inline constexpr std::uint64_t kStreamGenerate = 0x67656e65726174ULL;
inline constexpr std::uint64_t kStreamAllocate = 0x616c6c6f63617465ULL;
inline constexpr std::uint64_t kStreamSystematic = 0x73797374656d6174ULL;
inline constexpr std::uint64_t kStreamPairs = 0x7061697273ULL;

// Deterministic, portable source of randomness. All distributions are
// hand-rolled on top of mt19937_64 (whose output sequence the standard
// pins down exactly), so results are bit-identical across platforms and
// standard libraries.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  // Derive an independent stream for (seed, index, purpose). splitmix64
  // mixing keeps nearby indices decorrelated even though mt19937_64 is
  // seeded with a single word.
  static RandomSource for_stream(std::uint64_t seed, std::uint64_t index,
                                 std::uint64_t purpose) {
    return RandomSource(mix(seed ^ mix(index ^ mix(purpose))));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::domain_error("RandomSource::below: bound must be positive");
    std::uint64_t x, r;
    do {
      x = next_u64();
      r = x % bound;
    } while (x - r > std::uint64_t(-1) - (bound - 1));
    return r;
  }

  bool bernoulli(double p) { return next_unit() < p; }

  // Standard normal via Box-Muller. The second coordinate is discarded so
  // every draw consumes exactly two uniforms; stream position never depends
  // on call history.
  double normal() {
    double u1 = 1.0 - next_unit();  // (0, 1], keeps the log finite
    double u2 = next_unit();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Fisher-Yates shuffle using below(); std::shuffle is not portable.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

// Collapse (seed, index) into a fresh seed for APIs that take a single one.
inline std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t index) {
  return RandomSource::mix(seed ^ RandomSource::mix(index));
}

}  // namespace balancelab

#endif

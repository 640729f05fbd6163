#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace slim {

/// splitmix64 finalizer. Also used as the fixed mixing function for
/// fingerprint hashing, so its constants must never change.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ (v + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2)));
}

/// 64-bit FNV-1a over bytes.
std::uint64_t fnv1a(std::string_view bytes);

/// xoshiro256** seeded through splitmix64. Every stochastic routine takes
/// one of these explicitly; `Rng(seed, "stream")` derives an independent,
/// named stream so that adding a consumer never perturbs the others.
///
/// Normal and uniform variates are produced here rather than through
/// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::string_view stream);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  int uniform_int(int lo, int hi_inclusive);
  /// Standard normal via Box-Muller (one cached variate).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Index drawn from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  /// Derive a child stream; does not advance this generator.
  Rng fork(std::string_view stream) const;
  Rng fork(std::uint64_t index) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  std::uint64_t origin_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace slim

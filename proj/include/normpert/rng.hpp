#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace normpert {

/// Seeded random stream. Child streams are derived from the seed, not from
/// the engine state, so fork("init") yields the same stream no matter how
/// many numbers the parent has already produced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng fork(std::string_view tag) const;
  Rng fork(std::uint64_t index) const;

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  double beta(double a, double b);
  bool bernoulli(double p);
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

  static std::uint64_t splitmix64(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace normpert

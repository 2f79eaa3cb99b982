#pragma once

#include <cstdint>
#include <random>

namespace somnus {

/// Seeded random stream. The engine is std::mt19937_64 (fully specified by the
/// standard) and the distributions come from Boost.Random, so draws are
/// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream derived from (seed, stream). Streams with different ids
  /// share no engine state.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t tag = 0);

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double sd);
  double exponential(double rate);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace somnus

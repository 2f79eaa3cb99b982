#include "somnus/rng.hpp"

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace somnus {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng Rng::stream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(tag >> 32)};
  Rng rng(0);
  rng.engine_.seed(seq);
  return rng;
}

double Rng::uniform() { return boost::random::uniform_01<double>()(engine_); }

double Rng::uniform(double lo, double hi) {
  if (lo == hi) return lo;
  return boost::random::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal() { return boost::random::normal_distribution<double>()(engine_); }

double Rng::normal(double mean, double sd) {
  if (sd == 0.0) return mean;
  return boost::random::normal_distribution<double>(mean, sd)(engine_);
}

double Rng::exponential(double rate) {
  return boost::random::exponential_distribution<double>(rate)(engine_);
}

std::size_t Rng::index(std::size_t n) {
  return boost::random::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

}  // namespace somnus

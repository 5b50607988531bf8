// Seeded random number generation with serializable state.
#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace trussforge {

/// Deterministic generator used across the search and refinement stages.
/// Same seed, same call sequence, same results from the same binary.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform double in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Uniform integer in [0, n).
  int uniform_index(int n) {
    return std::uniform_int_distribution<int>(0, n - 1)(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream; distinct tags give distinct streams.
  Rng split(std::uint64_t tag) {
    std::uint64_t s = engine_();
    Rng child;
    child.engine_.seed(s ^ (0x9E3779B97F4A7C15ULL * (tag + 1)));
    return child;
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace trussforge

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace exitrack::num {

// Deterministic random source.
//
// The bit stream comes from std::mt19937_64, whose output sequence is fixed by
// the C++ standard. All conversions to floats, normals and indices are done
// here rather than through <random> distributions (whose algorithms are
// implementation-defined), so equal seeds give equal streams on any
// conforming toolchain. Independent child streams are derived by hashing
// (seed, stream id) with SplitMix64.
class RandomState {
 public:
  explicit RandomState(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller (one value per call, pairs cached).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Uniform integer in [0, n), unbiased (rejection sampling).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  // Child stream that does not advance this one.
  RandomState split(std::uint64_t stream) const;

  static std::uint64_t splitmix64(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace exitrack::num

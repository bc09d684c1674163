#pragma once

#include <cstdint>
#include <cmath>

namespace finmart {

// Deterministic counter-based substreams. Each path gets its own stream
// derived from (master_seed, path_index); results therefore do not depend on
// path order or on how work is scheduled across threads.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform index in [0, n).
  std::size_t pick(std::size_t n) {
    std::size_t v = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
  }

  double normal() {
    // Box-Muller; consumes two uniforms.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

 private:
  std::uint64_t state_;
};

struct RandomSource {
  std::uint64_t master_seed = 0;

  explicit RandomSource(std::uint64_t seed) : master_seed(seed) {}

  RandomStream substream(std::uint64_t path_index) const {
    // Two mixing rounds keep substreams statistically independent even for
    // adjacent path indices.
    std::uint64_t z = master_seed ^ (0x9e3779b97f4a7c15ULL + path_index * 0xd1342543de82ef95ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return RandomStream(z);
  }
};

}  // namespace finmart

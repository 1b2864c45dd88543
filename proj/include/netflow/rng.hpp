#pragma once

#include <cstdint>
#include <random>

namespace netflow {

/// 64-bit linear congruential generator, x <- 6364136223846793005 x + 1442695040888963407
/// (mod 2^64), seeded with x_0 = seed. uniform() returns the top 53 bits of the
/// next state scaled to [0, 1), so any implementation can reproduce a run.
class Lcg64 {
 public:
  explicit Lcg64(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::linear_congruential_engine<std::uint64_t, 6364136223846793005ULL, 1442695040888963407ULL, 0> engine_;
};

}  // namespace netflow

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace rawpc {

// Seeded random stream shared by a run. The engine is std::mt19937_64, whose
// output sequence and textual state are fixed by the standard. Distributions
// are implemented here instead of with <random> distributions because the
// latter are implementation-defined, and runs must be bit-reproducible.
//
// Draw costs (used for stream-position bookkeeping):
//   uniform()        1 engine draw
//   uniform_int(n)   1 draw, more only on rejection
//   normal()         2 draws (Box-Muller, cosine branch only, no caching)
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);

  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace rawpc

#pragma once

#include <cmath>
#include <cstdint>

namespace sdtnet {

// Seeded generator for the data pipeline (splitmix64 core, Box-Muller normals).
// Self-contained so that sampling stays bit-reproducible regardless of the
// standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), unbiased enough for pipeline use (Lemire reduction)
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>((static_cast<__uint128_t>(next_u64()) * static_cast<uint64_t>(n)) >> 64);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Independent child stream; `salt` distinguishes purposes sharing one seed.
  Rng fork(uint64_t salt) const {
    return Rng(state_ ^ (0xda3e39cb94b95bdbull * (salt + 0x9e3779b97f4a7c15ull)));
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sdtnet

// Deterministic random helpers on top of mt19937_64. std:: distributions
// are implementation-defined, so sampling is done by hand to keep outputs
// identical across standard libraries.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ililt {

// Uniform in [0,1) with 53 random bits.
inline double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * u01(rng);
}

// uniform integer in [0, n)
inline int uint_below(std::mt19937_64& rng, int n) {
  return static_cast<int>(rng() % static_cast<uint64_t>(n));
}

// Box-Muller, one value per call (the pair's second half is discarded to
// keep call sites order-independent).
inline double normal(std::mt19937_64& rng) {
  double u1 = u01(rng);
  double u2 = u01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ililt

#pragma once

#include <cmath>
#include <vector>

namespace ililt {

// Keys cubic kernel with a = -0.5: partition of unity, exact on linear ramps.
inline double keys_cubic(double x) {
  x = std::fabs(x);
  if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

// Per-axis tap table for integer upsample by `factor` with the
// half-pixel-center convention: src = (dst + 0.5)/factor - 0.5.
struct BicubicAxis {
  std::vector<int> idx;     // 4 clamped source indices per output position
  std::vector<double> wgt;  // 4 weights per output position

  BicubicAxis(int n_in, int factor) {
    const int n_out = n_in * factor;
    idx.resize(static_cast<size_t>(n_out) * 4);
    wgt.resize(static_cast<size_t>(n_out) * 4);
    for (int o = 0; o < n_out; ++o) {
      double src = (o + 0.5) / factor - 0.5;
      int base = static_cast<int>(std::floor(src));
      double frac = src - base;
      for (int t = 0; t < 4; ++t) {
        int s = base - 1 + t;
        if (s < 0) s = 0;
        if (s > n_in - 1) s = n_in - 1;
        idx[static_cast<size_t>(o) * 4 + t] = s;
        wgt[static_cast<size_t>(o) * 4 + t] = keys_cubic(frac - (t - 1));
      }
    }
  }
};

}  // namespace ililt

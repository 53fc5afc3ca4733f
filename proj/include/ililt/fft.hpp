// Radix-2 FFT for power-of-two sizes. All configured tile and patch sizes
// are powers of two, so no mixed-radix support is needed.
#pragma once

#include <complex>
#include <vector>

namespace ililt {

using cplx = std::complex<double>;

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Precomputed bit-reversal and twiddle tables for one transform length.
class FftPlan {
 public:
  explicit FftPlan(int n);

  int size() const { return n_; }

  // In-place transform. Forward is unnormalized; inverse applies 1/n,
  // so inverse(forward(x)) == x.
  void run(cplx* data, bool inverse) const;

 private:
  int n_;
  std::vector<int> rev_;
  std::vector<cplx> twiddle_;  // forward twiddles per stage, flattened
};

// 2D transform over a row-major h*w buffer (rows then columns).
// Uses an internal per-thread plan cache keyed by length.
void fft2(cplx* data, int h, int w, bool inverse);

const FftPlan& plan_for(int n);

}  // namespace ililt

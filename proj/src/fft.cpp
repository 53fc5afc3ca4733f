#include "ililt/fft.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace ililt {

FftPlan::FftPlan(int n) : n_(n) {
  if (!is_pow2(n)) throw std::invalid_argument("fft: length must be a power of two");
  rev_.resize(n);
  rev_[0] = 0;
  int bits = 0;
  while ((1 << bits) < n) ++bits;
  for (int i = 1; i < n; ++i) rev_[i] = (rev_[i >> 1] >> 1) | ((i & 1) << (bits - 1));
  // Twiddles for each stage, stage m uses m/2 factors exp(-2*pi*i*j/m).
  twiddle_.reserve(n > 1 ? n - 1 : 0);
  for (int m = 2; m <= n; m <<= 1) {
    for (int j = 0; j < m / 2; ++j) {
      double ang = -2.0 * M_PI * j / m;
      twiddle_.emplace_back(std::cos(ang), std::sin(ang));
    }
  }
}

void FftPlan::run(cplx* a, bool inverse) const {
  const int n = n_;
  for (int i = 0; i < n; ++i) {
    int j = rev_[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  const cplx* tw = twiddle_.data();
  for (int m = 2; m <= n; m <<= 1) {
    const int half = m / 2;
    for (int k = 0; k < n; k += m) {
      for (int j = 0; j < half; ++j) {
        cplx w = inverse ? std::conj(tw[j]) : tw[j];
        cplx u = a[k + j];
        cplx t = w * a[k + j + half];
        a[k + j] = u + t;
        a[k + j + half] = u - t;
      }
    }
    tw += half;
  }
  if (inverse) {
    const double s = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= s;
  }
}

const FftPlan& plan_for(int n) {
  thread_local std::map<int, FftPlan> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, FftPlan(n)).first;
  return it->second;
}

void fft2(cplx* data, int h, int w, bool inverse) {
  const FftPlan& pw = plan_for(w);
  for (int y = 0; y < h; ++y) pw.run(data + static_cast<size_t>(y) * w, inverse);
  const FftPlan& ph = plan_for(h);
  std::vector<cplx> col(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = data[static_cast<size_t>(y) * w + x];
    ph.run(col.data(), inverse);
    for (int y = 0; y < h; ++y) data[static_cast<size_t>(y) * w + x] = col[y];
  }
}

}  // namespace ililt

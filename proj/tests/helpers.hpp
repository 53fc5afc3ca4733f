// Shared oracles and fixtures for the unit tests: naive DFT / circular
// convolution references, random image builders, temp directories.
#pragma once

#include <unistd.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ililt/litho.hpp"
#include "ililt/raster.hpp"
#include "ililt/rng.hpp"

namespace testutil {

using ililt::BinaryImage;
using ililt::GrayImage;
using ililt::KernelSet;
using cplx = std::complex<double>;

inline GrayImage random_gray(std::mt19937_64& rng, int w, int h, double px = 8.0) {
  GrayImage g = GrayImage::zeros(w, h, px);
  for (double& v : g.data) v = ililt::u01(rng);
  return g;
}

inline BinaryImage random_binary(std::mt19937_64& rng, int w, int h, double px = 8.0,
                                 double fill = 0.5) {
  BinaryImage b = BinaryImage::zeros(w, h, px);
  for (auto& v : b.data) v = ililt::u01(rng) < fill ? 1 : 0;
  return b;
}

inline BinaryImage rect_design(int side, double px, int x0, int y0, int w, int h) {
  BinaryImage d = BinaryImage::zeros(side, side, px);
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) d.at(y, x) = 1;
  return d;
}

// Direct O(n^2) DFT, the oracle for the radix-2 transform.
inline std::vector<cplx> naive_dft(const std::vector<cplx>& in, bool inverse) {
  const int n = static_cast<int>(in.size());
  std::vector<cplx> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (int k = 0; k < n; ++k) {
    cplx acc(0, 0);
    for (int j = 0; j < n; ++j) {
      double ang = sign * 2.0 * M_PI * k * j / n;
      acc += in[j] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

inline std::vector<cplx> naive_dft2(const std::vector<cplx>& in, int h, int w, bool inverse) {
  std::vector<cplx> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    std::vector<cplx> row(in.begin() + static_cast<size_t>(y) * w,
                          in.begin() + static_cast<size_t>(y + 1) * w);
    row = naive_dft(row, inverse);
    for (int x = 0; x < w; ++x) tmp[static_cast<size_t>(y) * w + x] = row[x];
  }
  for (int x = 0; x < w; ++x) {
    std::vector<cplx> col(h);
    for (int y = 0; y < h; ++y) col[y] = tmp[static_cast<size_t>(y) * w + x];
    col = naive_dft(col, inverse);
    for (int y = 0; y < h; ++y) out[static_cast<size_t>(y) * w + x] = col[y];
  }
  return out;
}

// O(n^4) circular-convolution SOCS intensity, matching the simulator's
// offset convention: field(p) = sum_q h(q) M(p - q), q in [-r, r]^2.
inline GrayImage naive_intensity(const GrayImage& mask, const KernelSet& ks) {
  const int H = mask.height, W = mask.width, r = (ks.size - 1) / 2;
  GrayImage out = GrayImage::zeros(W, H, mask.pixel_size);
  for (int k = 0; k < ks.count; ++k) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        cplx field(0, 0);
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            int sy = ((y - dy) % H + H) % H;
            int sx = ((x - dx) % W + W) % W;
            field += ks.kernels[k][static_cast<size_t>(dy + r) * ks.size + (dx + r)] *
                     mask.at(sy, sx);
          }
        out.at(y, x) += ks.alpha[k] * std::norm(field);
      }
  }
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace testutil

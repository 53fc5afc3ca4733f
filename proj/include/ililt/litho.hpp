// Forward lithography: SOCS optical model, resist thresholding, sigmoid
// relaxations and kernel synthesis / file ingest.
#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ililt/raster.hpp"

namespace ililt {

// Sum-of-coherent-systems kernel stack. Kernels are origin-centered
// size x size complex grids (size odd), weights alpha_k sorted
// non-increasing. Intensity of a mask M is sum_k alpha_k |h_k (*) M|^2
// with (*) the circular convolution.
struct KernelSet {
  int count = 0;
  int size = 0;  // odd
  std::vector<std::vector<std::complex<double>>> kernels;  // row-major, [size*size]
  std::vector<double> alpha;
  std::string label = "nominal";
  double pixel_size = 1.0;       // nm per kernel pixel
  double intensity_bound = 0.0;  // sum_k alpha_k * (sum |h_k|)^2
};

// Throws on any invariant violation (count, odd size, alpha order/sign,
// non-finite entries).
void validate_kernel_set(const KernelSet& ks);

// Resist corner: threshold plus a dose multiplier applied to intensity
// before thresholding. kernel_label selects a KernelSet when several are
// loaded (dose-only corners reuse the nominal set).
struct ProcessCondition {
  std::string kernel_label = "nominal";
  double i_th = 0.225;
  double dose_scale = 1.0;
};

struct RelaxConfig {
  double beta_m = 4.0;   // mask sigmoid steepness
  double beta_z = 50.0;  // resist sigmoid steepness
};

// Binds a kernel set to one tile geometry and precomputes the kernel
// spectra. Immutable after construction; safe to share across threads.
class LithoSimulator {
 public:
  LithoSimulator(const KernelSet& ks, int height, int width);

  int height() const { return h_; }
  int width() const { return w_; }
  int kernel_radius() const { return radius_; }

  // I(i,j) = sum_k alpha_k |(h_k (*) M)(i,j)|^2, circular convolution via FFT.
  GrayImage simulate_intensity(const GrayImage& mask) const;

  // Forward pass keeping the per-kernel coherent fields A_k = h_k (*) M so
  // a following gradient call does not recompute them.
  struct Forward {
    GrayImage intensity;
    std::vector<std::vector<std::complex<double>>> fields;
  };
  Forward simulate_with_fields(const GrayImage& mask) const;

  // Adjoint of simulate_intensity: given upstream = dl/dI, returns dl/dM.
  std::vector<double> intensity_gradient(const GrayImage& mask,
                                         const std::vector<double>& upstream) const;
  std::vector<double> intensity_gradient(const Forward& fwd,
                                         const std::vector<double>& upstream) const;

 private:
  int h_, w_, radius_;
  std::vector<double> alpha_;
  std::vector<std::vector<std::complex<double>>> spectra_;  // fft2 of embedded kernels
  double pixel_size_;
};

// Convenience one-shot wrappers.
GrayImage simulate_intensity(const GrayImage& mask, const KernelSet& ks);
std::vector<double> intensity_gradient(const GrayImage& mask, const std::vector<double>& upstream,
                                       const KernelSet& ks);

// Z = 1 where dose*I > i_th.
BinaryImage resist_threshold(const GrayImage& intensity, const ProcessCondition& pc);

// M = sigma(beta_m * (M' - 0.5)). m_prime is the unconstrained variable.
GrayImage sigmoid_mask(const GrayImage& m_prime, const RelaxConfig& cfg);

// Z = sigma(beta_z * (dose*I - i_th)).
GrayImage sigmoid_resist(const GrayImage& intensity, const ProcessCondition& pc,
                         const RelaxConfig& cfg);

// Deterministic synthetic kernel stack: Gaussian envelope modulated by
// Hermite polynomials plus a seeded quadratic phase, L2-normalized,
// alpha_k = 0.6^k rescaled so an all-ones mask yields peak intensity 1.
// Values are rounded through f32 so a save/load round trip is exact.
KernelSet synth_kernels(uint64_t seed, int n, int size, double sigma_nm, double pixel_size);

// Binary kernel format: "SOCSKRN1" | u32 N | u32 size | N*f32 alpha |
// N*size*size*(f32 re, f32 im), little-endian. A JSON sidecar at
// path + ".json" carries label and pixel_size_nm.
void save_kernels(const KernelSet& ks, const std::string& path);
KernelSet load_kernels(const std::string& path);

}  // namespace ililt

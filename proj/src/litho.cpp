#include "ililt/litho.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

#include "ililt/fft.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace ililt {

void validate_kernel_set(const KernelSet& ks) {
  if (ks.count < 1) throw std::invalid_argument("kernels: count must be >= 1");
  if (ks.size < 1 || ks.size % 2 == 0) throw std::invalid_argument("kernels: size must be odd");
  if (static_cast<int>(ks.kernels.size()) != ks.count ||
      static_cast<int>(ks.alpha.size()) != ks.count)
    throw std::invalid_argument("kernels: count mismatch");
  const size_t n = static_cast<size_t>(ks.size) * ks.size;
  for (int k = 0; k < ks.count; ++k) {
    if (ks.kernels[k].size() != n) throw std::invalid_argument("kernels: wrong kernel size");
    if (!(ks.alpha[k] > 0.0)) throw std::invalid_argument("kernels: non-positive weight");
    if (k > 0 && ks.alpha[k] > ks.alpha[k - 1])
      throw std::invalid_argument("kernels: weights not sorted non-increasing");
    for (const auto& c : ks.kernels[k])
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
        throw std::invalid_argument("kernels: non-finite value");
  }
  if (!std::isfinite(ks.intensity_bound)) throw std::invalid_argument("kernels: bad intensity bound");
}

LithoSimulator::LithoSimulator(const KernelSet& ks, int height, int width)
    : h_(height), w_(width), radius_((ks.size - 1) / 2), pixel_size_(ks.pixel_size) {
  validate_kernel_set(ks);
  if (height < ks.size || width < ks.size)
    throw std::invalid_argument("litho: mask smaller than kernel");
  if (!is_pow2(height) || !is_pow2(width))
    throw std::invalid_argument("litho: tile dimensions must be powers of two");
  alpha_ = ks.alpha;
  spectra_.resize(ks.count);
  const int r = radius_;
  for (int k = 0; k < ks.count; ++k) {
    // Embed origin-centered kernel with circular wrap so its center sits at (0,0).
    std::vector<cplx> buf(static_cast<size_t>(h_) * w_, cplx(0, 0));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        int y = (dy + h_) % h_, x = (dx + w_) % w_;
        buf[static_cast<size_t>(y) * w_ + x] = ks.kernels[k][static_cast<size_t>(dy + r) * ks.size + (dx + r)];
      }
    fft2(buf.data(), h_, w_, false);
    spectra_[k] = std::move(buf);
  }
}

GrayImage LithoSimulator::simulate_intensity(const GrayImage& mask) const {
  if (mask.height != h_ || mask.width != w_)
    throw std::invalid_argument("litho: mask dimensions do not match simulator");
  const size_t n = mask.size();
  std::vector<cplx> fm(n);
  for (size_t i = 0; i < n; ++i) fm[i] = cplx(mask.data[i], 0.0);
  fft2(fm.data(), h_, w_, false);

  GrayImage out = GrayImage::zeros(w_, h_, mask.pixel_size);
  std::vector<cplx> field(n);
  for (size_t k = 0; k < spectra_.size(); ++k) {
    const cplx* hk = spectra_[k].data();
    for (size_t i = 0; i < n; ++i) field[i] = hk[i] * fm[i];
    fft2(field.data(), h_, w_, true);
    const double a = alpha_[k];
    for (size_t i = 0; i < n; ++i) out.data[i] += a * std::norm(field[i]);
  }
  return out;
}

LithoSimulator::Forward LithoSimulator::simulate_with_fields(const GrayImage& mask) const {
  if (mask.height != h_ || mask.width != w_)
    throw std::invalid_argument("litho: mask dimensions do not match simulator");
  const size_t n = mask.size();
  std::vector<cplx> fm(n);
  for (size_t i = 0; i < n; ++i) fm[i] = cplx(mask.data[i], 0.0);
  fft2(fm.data(), h_, w_, false);

  Forward fwd;
  fwd.intensity = GrayImage::zeros(w_, h_, mask.pixel_size);
  fwd.fields.resize(spectra_.size());
  for (size_t k = 0; k < spectra_.size(); ++k) {
    const cplx* hk = spectra_[k].data();
    std::vector<cplx> field(n);
    for (size_t i = 0; i < n; ++i) field[i] = hk[i] * fm[i];
    fft2(field.data(), h_, w_, true);
    const double a = alpha_[k];
    for (size_t i = 0; i < n; ++i) fwd.intensity.data[i] += a * std::norm(field[i]);
    fwd.fields[k] = std::move(field);
  }
  return fwd;
}

std::vector<double> LithoSimulator::intensity_gradient(const Forward& fwd,
                                                       const std::vector<double>& upstream) const {
  const size_t n = static_cast<size_t>(h_) * w_;
  if (fwd.fields.size() != spectra_.size() || upstream.size() != n)
    throw std::invalid_argument("litho: gradient dimension mismatch");
  // dl/dM = 2 Re[ ifft2( sum_k alpha_k conj(H_k) . fft2(upstream . A_k) ) ];
  // the linearity of the inverse transform lets all kernels share one ifft2.
  std::vector<cplx> acc(n, cplx(0, 0)), g(n);
  for (size_t k = 0; k < spectra_.size(); ++k) {
    const cplx* hk = spectra_[k].data();
    const cplx* ak = fwd.fields[k].data();
    for (size_t i = 0; i < n; ++i) g[i] = upstream[i] * ak[i];
    fft2(g.data(), h_, w_, false);
    const double a = alpha_[k];
    for (size_t i = 0; i < n; ++i) acc[i] += a * std::conj(hk[i]) * g[i];
  }
  fft2(acc.data(), h_, w_, true);
  std::vector<double> grad(n);
  for (size_t i = 0; i < n; ++i) grad[i] = 2.0 * acc[i].real();
  return grad;
}

std::vector<double> LithoSimulator::intensity_gradient(const GrayImage& mask,
                                                       const std::vector<double>& upstream) const {
  if (mask.height != h_ || mask.width != w_ || upstream.size() != mask.size())
    throw std::invalid_argument("litho: gradient dimension mismatch");
  return intensity_gradient(simulate_with_fields(mask), upstream);
}

GrayImage simulate_intensity(const GrayImage& mask, const KernelSet& ks) {
  return LithoSimulator(ks, mask.height, mask.width).simulate_intensity(mask);
}

std::vector<double> intensity_gradient(const GrayImage& mask, const std::vector<double>& upstream,
                                       const KernelSet& ks) {
  return LithoSimulator(ks, mask.height, mask.width).intensity_gradient(mask, upstream);
}

BinaryImage resist_threshold(const GrayImage& intensity, const ProcessCondition& pc) {
  BinaryImage out = BinaryImage::zeros(intensity.width, intensity.height, intensity.pixel_size);
  for (size_t i = 0; i < intensity.size(); ++i)
    out.data[i] = pc.dose_scale * intensity.data[i] > pc.i_th ? 1 : 0;
  return out;
}

GrayImage sigmoid_mask(const GrayImage& m_prime, const RelaxConfig& cfg) {
  GrayImage out = m_prime;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-cfg.beta_m * (v - 0.5)));
  return out;
}

GrayImage sigmoid_resist(const GrayImage& intensity, const ProcessCondition& pc,
                         const RelaxConfig& cfg) {
  GrayImage out = intensity;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-cfg.beta_z * (pc.dose_scale * v - pc.i_th)));
  return out;
}

namespace {

double hermite(int k, double t) {
  // Probabilists' Hermite via the usual recurrence.
  double h0 = 1.0, h1 = t;
  if (k == 0) return h0;
  if (k == 1) return h1;
  for (int i = 1; i < k; ++i) {
    double h2 = t * h1 - i * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

double u01(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

float f32(double v) { return static_cast<float>(v); }

// In-memory f32 quantization. The volatile slot is load-bearing: gcc 11 at
// -O3 elides the float round trip on vectorized loop tails otherwise.
double quantize_f32(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

}  // namespace

KernelSet synth_kernels(uint64_t seed, int n, int size, double sigma_nm, double pixel_size) {
  if (n < 1) throw std::invalid_argument("synth_kernels: n must be >= 1");
  if (size < 3 || size % 2 == 0) throw std::invalid_argument("synth_kernels: size must be odd and >= 3");
  if (!(sigma_nm > 0) || !(pixel_size > 0))
    throw std::invalid_argument("synth_kernels: sigma and pixel size must be positive");

  // Mode orders (a,b) by total degree; k=0 is the plain Gaussian low-pass.
  std::vector<std::pair<int, int>> orders;
  for (int deg = 0; static_cast<int>(orders.size()) < n; ++deg)
    for (int a = deg; a >= 0; --a) orders.emplace_back(a, deg - a);
  orders.resize(n);

  std::mt19937_64 rng(seed);
  const int r = (size - 1) / 2;
  const double sigma = sigma_nm / pixel_size;

  KernelSet ks;
  ks.count = n;
  ks.size = size;
  ks.pixel_size = pixel_size;
  ks.kernels.resize(n);
  ks.alpha.resize(n);
  for (int k = 0; k < n; ++k) {
    const double defocus = (u01(rng) * 2.0 - 1.0) * 0.3;  // quadratic phase coefficient
    const double tilt = (u01(rng) * 2.0 - 1.0) * M_PI;    // constant phase
    auto& ker = ks.kernels[k];
    ker.resize(static_cast<size_t>(size) * size);
    double norm = 0.0;
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x) {
        double g = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
        double amp = hermite(orders[k].first, x / sigma) * hermite(orders[k].second, y / sigma) * g;
        double phase = tilt + defocus * (x * x + y * y) / (static_cast<double>(r) * r);
        ker[static_cast<size_t>(y + r) * size + (x + r)] =
            cplx(amp * std::cos(phase), amp * std::sin(phase));
        norm += amp * amp;
      }
    norm = 1.0 / std::sqrt(norm);
    for (auto& c : ker) c = cplx(quantize_f32(c.real() * norm), quantize_f32(c.imag() * norm));
    ks.alpha[k] = std::pow(0.6, k);
  }

  // Calibrate: a constant all-ones mask through a circular LSI system gives
  // the constant intensity sum_k alpha_k |sum h_k|^2; rescale it to 1.
  double flat = 0.0;
  for (int k = 0; k < n; ++k) {
    cplx s(0, 0);
    for (const auto& c : ks.kernels[k]) s += c;
    flat += ks.alpha[k] * std::norm(s);
  }
  if (!(flat > 0)) throw std::runtime_error("synth_kernels: degenerate calibration");
  for (int k = 0; k < n; ++k) ks.alpha[k] = quantize_f32(ks.alpha[k] / flat);

  double bound = 0.0;
  for (int k = 0; k < n; ++k) {
    double s = 0.0;
    for (const auto& c : ks.kernels[k]) s += std::abs(c);
    bound += ks.alpha[k] * s * s;
  }
  ks.intensity_bound = bound;
  validate_kernel_set(ks);
  return ks;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
float get_f32(std::istream& is) {
  float v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

constexpr char kKernelMagic[8] = {'S', 'O', 'C', 'S', 'K', 'R', 'N', '1'};

}  // namespace

void save_kernels(const KernelSet& ks, const std::string& path) {
  validate_kernel_set(ks);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_kernels: cannot open " + path);
  os.write(kKernelMagic, 8);
  put_u32(os, static_cast<uint32_t>(ks.count));
  put_u32(os, static_cast<uint32_t>(ks.size));
  for (double a : ks.alpha) put_f32(os, f32(a));
  for (const auto& ker : ks.kernels)
    for (const auto& c : ker) {
      put_f32(os, f32(c.real()));
      put_f32(os, f32(c.imag()));
    }
  if (!os) throw std::runtime_error("save_kernels: write failed for " + path);
  os.close();

  nlohmann::json sidecar;
  sidecar["label"] = ks.label;
  sidecar["pixel_size_nm"] = ks.pixel_size;
  std::ofstream js(path + ".json", std::ios::trunc);
  js << sidecar.dump(2) << "\n";
}

KernelSet load_kernels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_kernels: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kKernelMagic, 8) != 0)
    throw std::runtime_error("load_kernels: bad magic in " + path);
  KernelSet ks;
  ks.count = static_cast<int>(get_u32(is));
  ks.size = static_cast<int>(get_u32(is));
  if (!is || ks.count < 1 || ks.count > 1 << 16)
    throw std::runtime_error("load_kernels: bad kernel count");
  if (ks.size < 1 || ks.size % 2 == 0) throw std::runtime_error("load_kernels: size must be odd");
  ks.alpha.resize(ks.count);
  for (int k = 0; k < ks.count; ++k) ks.alpha[k] = get_f32(is);
  ks.kernels.resize(ks.count);
  const size_t n = static_cast<size_t>(ks.size) * ks.size;
  for (int k = 0; k < ks.count; ++k) {
    ks.kernels[k].resize(n);
    for (size_t i = 0; i < n; ++i) {
      float re = get_f32(is), im = get_f32(is);
      ks.kernels[k][i] = cplx(re, im);
    }
  }
  if (!is) throw std::runtime_error("load_kernels: truncated file " + path);

  std::ifstream js(path + ".json");
  if (js) {
    nlohmann::json sidecar = nlohmann::json::parse(js, nullptr, false);
    if (!sidecar.is_discarded()) {
      ks.label = sidecar.value("label", ks.label);
      ks.pixel_size = sidecar.value("pixel_size_nm", ks.pixel_size);
    }
  }

  double bound = 0.0;
  for (int k = 0; k < ks.count; ++k) {
    if (!(ks.alpha[k] > 0.0)) throw std::runtime_error("load_kernels: non-positive weight");
    double s = 0.0;
    for (const auto& c : ks.kernels[k]) s += std::abs(c);
    bound += ks.alpha[k] * s * s;
  }
  ks.intensity_bound = bound;
  validate_kernel_set(ks);
  return ks;
}

}  // namespace ililt

#include "ililt/ilt.hpp"

#include <cmath>
#include <limits>

namespace ililt {
namespace {

void check_config(const IltConfig& cfg) {
  if (cfg.max_iters < 1) throw std::invalid_argument("ilt: max_iters must be >= 1");
  if (cfg.step_size < 0.0 || !std::isfinite(cfg.step_size))
    throw std::invalid_argument("ilt: step_size must be finite and >= 0");
  if (cfg.stop_rel_tol < 0.0) throw std::invalid_argument("ilt: stop_rel_tol must be >= 0");
}

// Gradient given the cached forward pass, so the optimizer does not pay
// for a second set of kernel convolutions per iteration.
GrayImage gradient_from_stages(const GrayImage& mask, const LithoSimulator::Forward& fwd,
                               const GrayImage& z, const BinaryImage& design,
                               const LithoSimulator& sim, const IltConfig& cfg) {
  size_t n = mask.size();
  std::vector<double> dldi(n);
  double bz = cfg.relax.beta_z * cfg.nominal.dose_scale;
  for (size_t i = 0; i < n; ++i) {
    double zv = z.data[i];
    double dldz = 2.0 * (zv - (design.data[i] ? 1.0 : 0.0));
    dldi[i] = dldz * bz * zv * (1.0 - zv);
  }
  std::vector<double> dldm = sim.intensity_gradient(fwd, dldi);
  GrayImage out = GrayImage::zeros(mask.width, mask.height, mask.pixel_size);
  double bm = cfg.relax.beta_m;
  for (size_t i = 0; i < n; ++i) {
    double mv = mask.data[i];
    out.data[i] = dldm[i] * bm * mv * (1.0 - mv);
  }
  return out;
}

}  // namespace

double ilt_loss(const GrayImage& z_relaxed, const BinaryImage& design) {
  if (z_relaxed.width != design.width || z_relaxed.height != design.height)
    throw std::invalid_argument("ilt_loss: dimension mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < z_relaxed.size(); ++i) {
    double d = z_relaxed.data[i] - (design.data[i] ? 1.0 : 0.0);
    acc += d * d;
  }
  return acc;
}

GrayImage ilt_gradient(const GrayImage& m_prime, const BinaryImage& design,
                       const LithoSimulator& sim, const IltConfig& cfg) {
  if (m_prime.width != design.width || m_prime.height != design.height)
    throw std::invalid_argument("ilt_gradient: dimension mismatch");
  for (double v : m_prime.data)
    if (!std::isfinite(v)) throw std::invalid_argument("ilt_gradient: non-finite m_prime");
  GrayImage mask = sigmoid_mask(m_prime, cfg.relax);
  LithoSimulator::Forward fwd = sim.simulate_with_fields(mask);
  GrayImage z = sigmoid_resist(fwd.intensity, cfg.nominal, cfg.relax);
  return gradient_from_stages(mask, fwd, z, design, sim, cfg);
}

GrayImage ilt_gradient(const GrayImage& m_prime, const BinaryImage& design, const KernelSet& ks,
                       const IltConfig& cfg) {
  LithoSimulator sim(ks, m_prime.height, m_prime.width);
  return ilt_gradient(m_prime, design, sim, cfg);
}

IltResult ilt_optimize(const BinaryImage& design, const KernelSet& ks, const IltConfig& cfg) {
  check_config(cfg);
  LithoSimulator sim(ks, design.height, design.width);

  GrayImage m_prime = to_gray(design);
  GrayImage best_m_prime = m_prime;
  OptTrace trace;
  trace.best_loss = std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg.max_iters; ++it) {
    GrayImage mask = sigmoid_mask(m_prime, cfg.relax);
    LithoSimulator::Forward fwd = sim.simulate_with_fields(mask);
    GrayImage z = sigmoid_resist(fwd.intensity, cfg.nominal, cfg.relax);
    double loss = ilt_loss(z, design);
    if (!std::isfinite(loss)) throw IltDivergence(it);
    trace.losses.push_back(loss);
    if (cfg.snapshot_interval > 0 && it % cfg.snapshot_interval == 0)
      trace.snapshots.emplace_back(it, mask);
    if (loss < trace.best_loss) {
      trace.best_loss = loss;
      trace.best_iter = it;
      best_m_prime = m_prime;
    }
    if (cfg.stop_rel_tol > 0.0 && it >= 10) {
      double prev = trace.losses[static_cast<size_t>(it) - 10];
      if (prev > 0.0 && (prev - loss) / prev < cfg.stop_rel_tol) break;
    }
    GrayImage grad = gradient_from_stages(mask, fwd, z, design, sim, cfg);
    for (size_t i = 0; i < m_prime.size(); ++i) m_prime.data[i] -= cfg.step_size * grad.data[i];
  }

  const GrayImage& chosen = cfg.keep_best ? best_m_prime : m_prime;
  IltResult res;
  res.mask = binarize(sigmoid_mask(chosen, cfg.relax), 0.5);
  res.trace = std::move(trace);
  return res;
}

}  // namespace ililt

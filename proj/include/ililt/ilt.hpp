// Numerical ILT by plain gradient descent on the sigmoid-relaxed pipeline
// M' -> M -> I -> Z against the design target. Generates the golden masks
// the learned optimizer trains on.
#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "ililt/litho.hpp"
#include "ililt/raster.hpp"

namespace ililt {

struct IltConfig {
  int max_iters = 400;
  double step_size = 2.0;  // lambda
  RelaxConfig relax;
  ProcessCondition nominal;
  double stop_rel_tol = 0.0;  // windowed relative improvement; 0 disables
  bool keep_best = true;
  int snapshot_interval = 0;  // record relaxed mask every k iters; 0 = none
};

struct OptTrace {
  std::vector<double> losses;
  std::vector<std::pair<int, GrayImage>> snapshots;
  int best_iter = 0;
  double best_loss = 0.0;
};

struct IltDivergence : std::runtime_error {
  int iteration;
  explicit IltDivergence(int it)
      : std::runtime_error("ilt diverged at iteration " + std::to_string(it)), iteration(it) {}
};

// sum_{ij} (Z - Z*)^2
double ilt_loss(const GrayImage& z_relaxed, const BinaryImage& design);

// dl/dM' of the full relaxed pipeline at M'. Chain: dl/dZ = 2(Z - Z*),
// through the resist sigmoid, the intensity adjoint, the mask sigmoid.
GrayImage ilt_gradient(const GrayImage& m_prime, const BinaryImage& design,
                       const LithoSimulator& sim, const IltConfig& cfg);
GrayImage ilt_gradient(const GrayImage& m_prime, const BinaryImage& design, const KernelSet& ks,
                       const IltConfig& cfg);

struct IltResult {
  BinaryImage mask;
  OptTrace trace;
};

// M'_0 = design; M' <- M' - lambda * dl/dM'. Returns the best-loss iterate
// (or the last, with keep_best off) binarized at 0.5. Throws IltDivergence
// when the loss leaves the finite range.
IltResult ilt_optimize(const BinaryImage& design, const KernelSet& ks, const IltConfig& cfg);

}  // namespace ililt

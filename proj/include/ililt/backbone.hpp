// The weight-tied update operator M_{t+1} = g(M_t, Z_t, Z*, w): a compact
// CFNO-style backbone (patch-shared spectral layer, token-grid conv, head),
// plus eager unrolling and fixed-point inference with residual monitoring.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ililt/grad.hpp"
#include "ililt/litho.hpp"
#include "ililt/raster.hpp"

namespace ililt {

struct BackboneConfig {
  int patch_size = 32;  // p, power of two, divides the tile side
  int k_max = 8;        // retained spectral modes per axis, <= p/2
  int hidden = 16;      // channels c
};

// Holds w of Eq-style update M_{t+1} = g(M_t, Z_t, Z*, w). One instance is
// one parameter set; weight tying across steps is simply reusing the
// instance. Pipeline per step: stack 3 input channels, split into p x p
// patches, per-patch fft2, shared complex linear map on the k_max corner
// modes (3 -> c), ifft2/real/relu, merge, pool to the patch-grid tokens,
// 3x3 token conv, bicubic re-expansion added onto the full-resolution
// features, 1x1 head conv, sigmoid.
class UpdateOperator {
 public:
  UpdateOperator(const BackboneConfig& cfg, uint64_t seed);

  const BackboneConfig& config() const { return cfg_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  int64_t count_params() const;
  int64_t training_step() const { return training_step_; }
  void set_training_step(int64_t s) { training_step_ = s; }

  // Records one step on the tape. m_t, z_t, design are node ids of [H,W]
  // real tensors; the result node is M_{t+1}, [H,W], values in (0,1).
  int step_on_tape(Tape& t, int m_t, int z_t, int design);

  // Eager one-step application (throwaway tape, no backward).
  GrayImage step(const GrayImage& m_t, const GrayImage& z_t, const BinaryImage& design);

  // Checkpoint: magic "ILILT001" | u32 JSON header length | JSON header
  // (config, dtype, training step, parameter names/shapes) | f32 blobs in
  // header order, little-endian.
  void save(const std::string& path) const;
  static UpdateOperator load(const std::string& path);

 private:
  BackboneConfig cfg_;
  int64_t training_step_ = 0;
  std::vector<Parameter> params_;  // spec_w, token_w, token_b, head_w, head_b
};

// Kernel stack plus resist/relaxation settings bound together for unroll
// and inference.
struct LithoContext {
  KernelSet kernels;
  ProcessCondition process;
  RelaxConfig relax;
};

struct Trajectory {
  std::vector<GrayImage> masks;   // M_0..M_T
  std::vector<GrayImage> wafers;  // Z_0..Z_T, Z_t = sigmoid_resist(I(M_t))
};

// Eager trajectory: M_0 = design, no gradients recorded anywhere.
Trajectory unroll(const BinaryImage& design, UpdateOperator& op, int T, const LithoContext& lc);

struct InferConfig {
  int t_max = 8;
  double residual_tol = 0.0;  // epsilon on r_t; 0 runs all t_max steps
  LithoContext litho;
};

struct InferResult {
  BinaryImage mask;
  std::vector<double> residuals;  // r_1..r_stop, ||M_{t+1}-M_t||_F / sqrt(n)
};

// Derivative-free fixed-point iteration: fresh Z_t each step, stop at t_max
// or when the normalized mask delta drops below residual_tol.
InferResult infer(const BinaryImage& design, UpdateOperator& op, const InferConfig& cfg);

}  // namespace ililt

// BPTT training of the update operator with the exponentially weighted
// trajectory loss, the untied-weights L2O ablation mode, checkpointing,
// and dataset-level evaluation (EPE / PVB / throughput).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ililt/backbone.hpp"
#include "ililt/dataset.hpp"
#include "ililt/metrics.hpp"

namespace ililt {

struct TrainConfig {
  int T = 4;  // unroll depth
  int epochs = 5;
  double lr = 0.004;
  double lr_decay = 0.5;  // step policy: lr *= lr_decay each epoch
  double weight_decay = 1e-4;
  int batch_size = 2;
  uint64_t seed = 0;
  bool weight_tying = true;  // false: L2O mode, step t trains its own set
  bool backprop_through_litho = false;
  double val_fraction = 0.1;
  BackboneConfig backbone;
  ProcessCondition process;
  RelaxConfig relax;
  std::string checkpoint_dir;  // empty disables checkpoint writes
};

struct EpochRecord {
  double mean_loss = 0.0;
  double val_epe_mean = 0.0;
  double seconds = 0.0;
  std::vector<std::string> checkpoints;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
};

// Loss window start round(T/2) with ties rounding up, and the per-step
// weight exp(t/T - 1); weight(T) = 1.
int trajectory_start(int T);
double trajectory_weight(int t, int T);

// Weighted sum over masks M_{t0}..M_T (exactly T - t0 + 1 entries) of
// weight(t) * ||M_t - M*||_F^2. Numeric reference; training builds the
// same expression on a tape.
double trajectory_loss(const std::vector<GrayImage>& masks, const BinaryImage& golden, int T);

struct TrainResult {
  // Tied mode trains one set; L2O mode trains T, step t using ops[t-1].
  std::vector<UpdateOperator> ops;
  TrainReport report;
};

TrainResult train(const Dataset& ds, const KernelSet& ks, const TrainConfig& cfg);

// Eager T-step rollout through an operator stack (ops[min(t-1, last)]),
// binarized at 0.5. With a single operator this matches infer at fixed
// step count.
BinaryImage apply_stack(const BinaryImage& design, std::vector<UpdateOperator>& ops, int T,
                        const LithoContext& lc);

struct EvalConfig {
  InferConfig infer;
  EpeConfig epe;
  double dose_delta = 0.02;  // inner/outer dose corners: (1 -/+ delta) * nominal
};

struct EvalRow {
  std::string tile_id;
  int epe_violations = 0;
  double pvb_nm2 = 0.0;
  double seconds = 0.0;  // inference wall-clock
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  double epe_mean = 0.0;
  double pvb_mean = 0.0;
  double seconds_mean = 0.0;
};

EvalSummary evaluate(const Dataset& ds, UpdateOperator& op, const EvalConfig& cfg);

// tile_id,epe_violations,pvb_nm2,seconds rows plus a mean footer.
std::string eval_csv(const EvalSummary& s);
std::string train_report_json(const TrainReport& r);

}  // namespace ililt

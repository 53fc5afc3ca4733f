// One JSON document per run: every tunable in one place, written back with
// all defaults enumerated so a run is reproducible from its config alone.
#pragma once

#include <cstdint>
#include <string>

#include "ililt/backbone.hpp"
#include "ililt/dataset.hpp"
#include "ililt/ilt.hpp"
#include "ililt/metrics.hpp"
#include "ililt/trainer.hpp"

namespace ililt {

struct KernelGenConfig {
  uint64_t seed = 7;
  int count = 8;
  int size = 21;
  double sigma_nm = 40.0;  // the 21-px window holds +/- 2 sigma at 8 nm/px
  double pixel_size_nm = 8.0;
};

struct IltScalars {
  int max_iters = 400;
  double step_size = 2.0;
  double stop_rel_tol = 0.01;  // tuned: dataset-scale solves plateau past this
  bool keep_best = true;
  int snapshot_interval = 0;
};

struct TrainScalars {
  int T = 4;
  int epochs = 5;
  double lr = 0.004;
  double lr_decay = 0.5;
  double weight_decay = 1e-4;
  int batch_size = 2;
  bool weight_tying = true;
  bool backprop_through_litho = false;
  double val_fraction = 0.1;
};

struct InferScalars {
  int t_max = 8;
  double residual_tol = 0.0;
};

struct AppConfig {
  KernelGenConfig kernels;
  TileBounds bounds;
  int dataset_tiles = 200;
  ProcessCondition process;
  RelaxConfig relax;
  IltScalars ilt;
  BackboneConfig backbone;
  TrainScalars train;
  InferScalars infer;
  EpeConfig epe;
  double dose_delta = 0.02;
};

// Missing keys fall back to defaults; unknown keys are rejected.
AppConfig load_app_config(const std::string& path);
void save_app_config(const AppConfig& c, const std::string& path);
std::string app_config_json(const AppConfig& c);

// Assemble module configs from the shared document.
IltConfig make_ilt_config(const AppConfig& c);
TrainConfig make_train_config(const AppConfig& c, uint64_t seed, const std::string& ckpt_dir);
InferConfig make_infer_config(const AppConfig& c, const KernelSet& ks);
EvalConfig make_eval_config(const AppConfig& c, const KernelSet& ks);

}  // namespace ililt

#include "ililt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "json.hpp"

#include "ililt/rng.hpp"

namespace fs = std::filesystem;

namespace ililt {

int trajectory_start(int T) {
  if (T < 1) throw std::invalid_argument("trajectory_start: T must be >= 1");
  return (T + 1) / 2;
}

double trajectory_weight(int t, int T) {
  return std::exp(static_cast<double>(t) / T - 1.0);
}

double trajectory_loss(const std::vector<GrayImage>& masks, const BinaryImage& golden, int T) {
  const int t0 = trajectory_start(T);
  if (static_cast<int>(masks.size()) != T - t0 + 1)
    throw std::invalid_argument("trajectory_loss: expected masks for t = round(T/2)..T");
  double total = 0.0;
  for (int t = t0; t <= T; ++t) {
    const GrayImage& m = masks[t - t0];
    if (m.height != golden.height || m.width != golden.width)
      throw std::invalid_argument("trajectory_loss: dimension mismatch");
    double sq = 0.0;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        double d = m.at(y, x) - static_cast<double>(golden.at(y, x));
        sq += d * d;
      }
    total += trajectory_weight(t, T) * sq;
  }
  return total;
}

namespace {

// One sample's unrolled trajectory objective recorded on the tape.
int record_sample(Tape& tape, std::vector<UpdateOperator>& ops, bool tied, int T,
                  const Sample& s, const LithoSimulator& sim, const TrainConfig& cfg) {
  const double px = s.design.pixel_size;
  const int design_node = tape.leaf(Tensor::from_binary(s.design));
  const int golden_node = tape.leaf(Tensor::from_binary(s.golden));
  const int t0 = trajectory_start(T);
  const double bz = cfg.relax.beta_z;
  int m = design_node;
  int loss = -1;
  for (int t = 1; t <= T; ++t) {
    int z;
    if (cfg.backprop_through_litho) {
      int inode = tape.litho_intensity(m, &sim);
      z = tape.sigmoid(
          tape.scalar_affine(inode, bz * cfg.process.dose_scale, -bz * cfg.process.i_th));
    } else {
      GrayImage mg = tape.value(m).to_image(px);
      GrayImage zg = sigmoid_resist(sim.simulate_intensity(mg), cfg.process, cfg.relax);
      z = tape.leaf(Tensor::from_image(zg));
    }
    UpdateOperator& op = tied ? ops[0] : ops[t - 1];
    m = op.step_on_tape(tape, m, z, design_node);
    if (t >= t0) {
      int term = tape.scalar_mul(tape.frobenius_sq_diff(m, golden_node), trajectory_weight(t, T));
      loss = loss < 0 ? term : tape.add(loss, term);
    }
  }
  return loss;
}

}  // namespace

TrainResult train(const Dataset& ds, const KernelSet& ks, const TrainConfig& cfg) {
  if (ds.samples.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.T < 1 || cfg.epochs < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("train: T, epochs and batch_size must be positive");
  if (cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
    throw std::invalid_argument("train: val_fraction must lie in [0,1)");
  validate_kernel_set(ks);

  const int h = ds.samples.front().design.height;
  const int w = ds.samples.front().design.width;
  for (const Sample& s : ds.samples)
    if (s.design.height != h || s.design.width != w || s.golden.height != h ||
        s.golden.width != w)
      throw std::invalid_argument("train: dataset dimensions are not uniform");

  LithoSimulator sim(ks, h, w);
  LithoContext lc{ks, cfg.process, cfg.relax};

  TrainResult out;
  const int n_ops = cfg.weight_tying ? 1 : cfg.T;
  out.ops.reserve(n_ops);
  for (int i = 0; i < n_ops; ++i) out.ops.emplace_back(cfg.backbone, cfg.seed + i);

  std::vector<Parameter*> all_params;
  for (UpdateOperator& op : out.ops)
    for (Parameter* p : op.parameters()) all_params.push_back(p);

  // Fixed validation split, then a fresh training order each epoch, all
  // from one seeded stream.
  std::mt19937_64 order_rng(cfg.seed ^ 0x5eedf00dull);
  std::vector<int> idx(ds.samples.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  shuffle(idx, order_rng);
  const int val_n = std::min(static_cast<int>(idx.size()) - 1,
                             static_cast<int>(std::lround(idx.size() * cfg.val_fraction)));
  std::vector<int> val_idx(idx.begin(), idx.begin() + val_n);
  std::vector<int> train_idx(idx.begin() + val_n, idx.end());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch);
    shuffle(train_idx, order_rng);

    double loss_sum = 0.0;
    for (size_t b = 0; b < train_idx.size(); b += cfg.batch_size) {
      const size_t b_end = std::min(train_idx.size(), b + static_cast<size_t>(cfg.batch_size));
      const double inv = 1.0 / static_cast<double>(b_end - b);
      for (size_t j = b; j < b_end; ++j) {
        const Sample& s = ds.samples[train_idx[j]];
        Tape tape;
        int loss = record_sample(tape, out.ops, cfg.weight_tying, cfg.T, s, sim, cfg);
        loss_sum += tape.value(loss).data[0];
        tape.backward(loss, inv);
      }
      adam_step(all_params, lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
      for (UpdateOperator& op : out.ops) op.set_training_step(op.training_step() + 1);
    }

    EpochRecord rec;
    rec.mean_loss = train_idx.empty() ? 0.0 : loss_sum / train_idx.size();

    double epe_sum = 0.0;
    for (int vi : val_idx) {
      const Sample& s = ds.samples[vi];
      BinaryImage mask = apply_stack(s.design, out.ops, cfg.T, lc);
      BinaryImage wafer = resist_threshold(sim.simulate_intensity(to_gray(mask)), cfg.process);
      epe_sum += epe_violations(wafer, s.design, EpeConfig{}).violations;
    }
    rec.val_epe_mean = val_idx.empty() ? 0.0 : epe_sum / val_idx.size();

    if (!cfg.checkpoint_dir.empty()) {
      fs::create_directories(cfg.checkpoint_dir);
      for (int i = 0; i < n_ops; ++i) {
        char name[64];
        if (cfg.weight_tying)
          std::snprintf(name, sizeof(name), "epoch_%02d.ckpt", epoch + 1);
        else
          std::snprintf(name, sizeof(name), "epoch_%02d_step_%d.ckpt", epoch + 1, i + 1);
        std::string path = cfg.checkpoint_dir + "/" + name;
        out.ops[i].save(path);
        rec.checkpoints.push_back(std::move(path));
      }
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    out.report.epochs.push_back(std::move(rec));
  }
  return out;
}

BinaryImage apply_stack(const BinaryImage& design, std::vector<UpdateOperator>& ops, int T,
                        const LithoContext& lc) {
  if (ops.empty()) throw std::invalid_argument("apply_stack: no operators");
  if (T < 1) throw std::invalid_argument("apply_stack: T must be >= 1");
  LithoSimulator sim(lc.kernels, design.height, design.width);
  GrayImage m = to_gray(design);
  for (int t = 1; t <= T; ++t) {
    GrayImage z = sigmoid_resist(sim.simulate_intensity(m), lc.process, lc.relax);
    UpdateOperator& op = ops[std::min(static_cast<size_t>(t - 1), ops.size() - 1)];
    m = op.step(m, z, design);
  }
  return binarize(m, 0.5);
}

EvalSummary evaluate(const Dataset& ds, UpdateOperator& op, const EvalConfig& cfg) {
  if (ds.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (cfg.dose_delta < 0.0 || cfg.dose_delta >= 1.0)
    throw std::invalid_argument("evaluate: dose_delta must lie in [0,1)");
  const KernelSet& ks = cfg.infer.litho.kernels;
  const ProcessCondition& nominal = cfg.infer.litho.process;
  ProcessCondition inner = nominal;
  ProcessCondition outer = nominal;
  inner.dose_scale = nominal.dose_scale * (1.0 - cfg.dose_delta);
  outer.dose_scale = nominal.dose_scale * (1.0 + cfg.dose_delta);

  const int h = ds.samples.front().design.height;
  const int w = ds.samples.front().design.width;
  LithoSimulator sim(ks, h, w);

  EvalSummary out;
  for (const Sample& s : ds.samples) {
    EvalRow row;
    row.tile_id = s.id;
    const auto t0 = std::chrono::steady_clock::now();
    InferResult r = infer(s.design, op, cfg.infer);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    BinaryImage wafer = resist_threshold(sim.simulate_intensity(to_gray(r.mask)), nominal);
    row.epe_violations = epe_violations(wafer, s.design, cfg.epe).violations;
    row.pvb_nm2 = pvb_area(r.mask, ks, nominal, inner, outer);
    out.epe_mean += row.epe_violations;
    out.pvb_mean += row.pvb_nm2;
    out.seconds_mean += row.seconds;
    out.rows.push_back(std::move(row));
  }
  out.epe_mean /= out.rows.size();
  out.pvb_mean /= out.rows.size();
  out.seconds_mean /= out.rows.size();
  return out;
}

std::string eval_csv(const EvalSummary& s) {
  std::string out = "tile_id,epe_violations,pvb_nm2,seconds\n";
  char line[160];
  for (const EvalRow& r : s.rows) {
    std::snprintf(line, sizeof(line), "%s,%d,%.3f,%.4f\n", r.tile_id.c_str(), r.epe_violations,
                  r.pvb_nm2, r.seconds);
    out += line;
  }
  std::snprintf(line, sizeof(line), "mean,%.3f,%.3f,%.4f\n", s.epe_mean, s.pvb_mean,
                s.seconds_mean);
  out += line;
  return out;
}

std::string train_report_json(const TrainReport& r) {
  nlohmann::json j;
  j["epochs"] = nlohmann::json::array();
  for (const EpochRecord& e : r.epochs)
    j["epochs"].push_back({{"mean_loss", e.mean_loss},
                           {"val_epe_mean", e.val_epe_mean},
                           {"seconds", e.seconds},
                           {"checkpoints", e.checkpoints}});
  return j.dump(2) + "\n";
}

}  // namespace ililt

// Command-line front end: kernel synthesis, dataset construction, forward
// simulation, numerical ILT, operator training, inference and evaluation.
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ililt/config.hpp"
#include "ililt/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace ililt;

namespace {

// One CLI instance per output directory.
struct LockFile {
  std::string path;
  int fd = -1;
  explicit LockFile(const std::string& dir) {
    fs::create_directories(dir);
    path = dir + "/.ililt.lock";
    fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw std::runtime_error("output directory is locked by another run: " + path);
    std::string pid = std::to_string(::getpid()) + "\n";
    ssize_t n = ::write(fd, pid.c_str(), pid.size());
    (void)n;
  }
  ~LockFile() {
    if (fd >= 0) ::close(fd);
    if (!path.empty()) ::unlink(path.c_str());
  }
};

// Deletes the declared outputs unless release() is called first, so a
// failed subcommand leaves nothing half-written behind.
struct OutputGuard {
  std::vector<std::string> files;
  std::vector<std::string> dirs;
  bool armed = true;
  void add_file(const std::string& p) { files.push_back(p); }
  void add_dir(const std::string& p) { dirs.push_back(p); }
  void release() { armed = false; }
  ~OutputGuard() {
    if (!armed) return;
    std::error_code ec;
    for (const std::string& f : files) fs::remove(f, ec);
    for (const std::string& d : dirs) fs::remove_all(d, ec);
  }
};

AppConfig load_cfg(const std::string& path) {
  return path.empty() ? AppConfig{} : load_app_config(path);
}

std::string resolve_near(const std::string& dir, const std::string& file) {
  if (file.empty()) throw std::runtime_error("dataset manifest has no kernel file reference");
  if (fs::exists(file)) return file;
  std::string alt = dir + "/" + file;
  if (fs::exists(alt)) return alt;
  throw std::runtime_error("file not found: " + file);
}

void require_empty_dir(const std::string& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir))
    throw std::runtime_error("output directory is not empty: " + dir);
}

GrayImage clamped_unit(GrayImage img) {
  for (double& v : img.data) v = std::min(1.0, std::max(0.0, v));
  return img;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write: " + path);
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inverse lithography toolkit: SOCS simulation, numerical ILT, "
               "learned update operator"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 0;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "override the subcommand's seed");
  };

  // gen-kernels
  auto* c_genk = app.add_subcommand("gen-kernels", "synthesize a SOCS kernel stack");
  std::string genk_out;
  c_genk->add_option("--out", genk_out, "output kernel file")->required();
  add_common(c_genk);

  // gen-dataset
  auto* c_gend = app.add_subcommand("gen-dataset", "generate tiles and ILT golden masks");
  std::string gend_kernels, gend_out;
  int gend_tiles = -1;
  c_gend->add_option("--kernels", gend_kernels, "kernel file")->required();
  c_gend->add_option("--out", gend_out, "output directory")->required();
  c_gend->add_option("--tiles", gend_tiles, "tile count (default from config)");
  add_common(c_gend);

  // simulate
  auto* c_sim = app.add_subcommand("simulate", "forward litho: intensity and wafer images");
  std::string sim_mask, sim_kernels, sim_outdir = ".";
  c_sim->add_option("--mask", sim_mask, "mask PNG")->required();
  c_sim->add_option("--kernels", sim_kernels, "kernel file")->required();
  c_sim->add_option("--out-dir", sim_outdir, "output directory (default .)");
  add_common(c_sim);

  // ilt
  auto* c_ilt = app.add_subcommand("ilt", "numerical ILT on one design");
  std::string ilt_design, ilt_kernels, ilt_out = "mask.png", ilt_trace;
  int ilt_iters = -1;
  double ilt_step = -1.0;
  c_ilt->add_option("--design", ilt_design, "design PNG")->required();
  c_ilt->add_option("--kernels", ilt_kernels, "kernel file")->required();
  c_ilt->add_option("--out", ilt_out, "output mask PNG (default mask.png)");
  c_ilt->add_option("--trace", ilt_trace, "write iter,loss CSV");
  c_ilt->add_option("--iters", ilt_iters, "override max iterations");
  c_ilt->add_option("--step", ilt_step, "override step size");
  add_common(c_ilt);

  // train
  auto* c_train = app.add_subcommand("train", "BPTT-train the update operator");
  std::string train_dataset, train_out;
  c_train->add_option("--dataset", train_dataset, "dataset directory")->required();
  c_train->add_option("--out", train_out, "output directory (checkpoints, report)")->required();
  add_common(c_train);

  // infer
  auto* c_infer = app.add_subcommand("infer", "fixed-point inference on one design");
  std::string inf_design, inf_ckpt, inf_kernels, inf_out = "mask_out.png";
  int inf_tmax = -1;
  double inf_tol = -1.0;
  c_infer->add_option("--design", inf_design, "design PNG")->required();
  c_infer->add_option("--ckpt", inf_ckpt, "operator checkpoint")->required();
  c_infer->add_option("--kernels", inf_kernels, "kernel file")->required();
  c_infer->add_option("--out", inf_out, "output mask PNG (default mask_out.png)");
  c_infer->add_option("--t-max", inf_tmax, "override max steps");
  c_infer->add_option("--tol", inf_tol, "override residual tolerance");
  add_common(c_infer);

  // eval
  auto* c_eval = app.add_subcommand("eval", "EPE/PVB/throughput over a dataset");
  std::string eval_dataset, eval_ckpt, eval_out;
  c_eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
  c_eval->add_option("--ckpt", eval_ckpt, "operator checkpoint")->required();
  c_eval->add_option("--out", eval_out, "write the CSV here as well");
  add_common(c_eval);

  // gradcheck
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference check of every primitive");
  add_common(c_gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  try {
    if (*c_genk) {
      AppConfig cfg = load_cfg(config_path);
      uint64_t s = c_genk->count("--seed") ? seed : cfg.kernels.seed;
      KernelSet ks = synth_kernels(s, cfg.kernels.count, cfg.kernels.size, cfg.kernels.sigma_nm,
                                   cfg.kernels.pixel_size_nm);
      OutputGuard g;
      g.add_file(genk_out);
      g.add_file(genk_out + ".json");
      save_kernels(ks, genk_out);
      g.release();
      std::printf("wrote %d kernels (size %d, %.1f nm/px) to %s\n", ks.count, ks.size,
                  ks.pixel_size, genk_out.c_str());
    } else if (*c_gend) {
      AppConfig cfg = load_cfg(config_path);
      KernelSet ks = load_kernels(gend_kernels);
      int n = gend_tiles > 0 ? gend_tiles : cfg.dataset_tiles;
      uint64_t s = c_gend->count("--seed") ? seed : 1;
      require_empty_dir(gend_out);
      LockFile lock(gend_out);
      OutputGuard g;
      g.add_dir(gend_out);
      DatasetManifest m =
          build_dataset(n, s, ks, gend_kernels, make_ilt_config(cfg), cfg.bounds, gend_out);
      AppConfig used = cfg;
      used.dataset_tiles = n;
      save_app_config(used, gend_out + "/config.used.json");
      g.release();
      int clean = 0;
      for (const DatasetEntry& e : m.entries) clean += e.epe_clean ? 1 : 0;
      std::printf("wrote %zu tiles to %s (%d epe-clean)\n", m.entries.size(), gend_out.c_str(),
                  clean);
    } else if (*c_sim) {
      AppConfig cfg = load_cfg(config_path);
      KernelSet ks = load_kernels(sim_kernels);
      GrayImage mask = load_png(sim_mask, ks.pixel_size);
      validate_unit_range(mask);
      GrayImage intensity = simulate_intensity(mask, ks);
      BinaryImage wafer = resist_threshold(intensity, cfg.process);
      fs::create_directories(sim_outdir);
      const std::string ipath = sim_outdir + "/intensity.png";
      const std::string wpath = sim_outdir + "/wafer.png";
      OutputGuard g;
      g.add_file(ipath);
      g.add_file(wpath);
      save_png(clamped_unit(intensity), ipath);
      save_png(to_gray(wafer), wpath);
      g.release();
      std::printf("wrote %s and %s\n", ipath.c_str(), wpath.c_str());
    } else if (*c_ilt) {
      AppConfig cfg = load_cfg(config_path);
      KernelSet ks = load_kernels(ilt_kernels);
      BinaryImage design = binarize(load_png(ilt_design, ks.pixel_size), 0.5);
      IltConfig icfg = make_ilt_config(cfg);
      if (ilt_iters > 0) icfg.max_iters = ilt_iters;
      if (ilt_step >= 0.0) icfg.step_size = ilt_step;
      IltResult res = ilt_optimize(design, ks, icfg);
      OutputGuard g;
      g.add_file(ilt_out);
      save_png(to_gray(res.mask), ilt_out);
      if (!ilt_trace.empty()) {
        g.add_file(ilt_trace);
        std::string csv = "iter,loss\n";
        char line[64];
        for (size_t i = 0; i < res.trace.losses.size(); ++i) {
          std::snprintf(line, sizeof(line), "%zu,%.9g\n", i, res.trace.losses[i]);
          csv += line;
        }
        write_text(ilt_trace, csv);
      }
      g.release();
      std::printf("wrote %s: best loss %.6g at iteration %d (%zu run)\n", ilt_out.c_str(),
                  res.trace.best_loss, res.trace.best_iter, res.trace.losses.size());
    } else if (*c_train) {
      AppConfig cfg = load_cfg(config_path);
      Dataset ds = load_dataset(train_dataset);
      std::string kpath = resolve_near(train_dataset, ds.manifest.kernel_file);
      KernelSet ks = load_kernels(kpath);
      uint64_t s = c_train->count("--seed") ? seed : 0;
      require_empty_dir(train_out);
      LockFile lock(train_out);
      OutputGuard g;
      g.add_dir(train_out);
      TrainConfig tcfg = make_train_config(cfg, s, train_out);
      std::printf("training on %zu tiles (T=%d, %d epochs, %s)\n", ds.samples.size(), tcfg.T,
                  tcfg.epochs, tcfg.weight_tying ? "tied" : "untied");
      TrainResult res = train(ds, ks, tcfg);
      write_text(train_out + "/train_report.json", train_report_json(res.report));
      save_app_config(cfg, train_out + "/config.used.json");
      g.release();
      for (size_t e = 0; e < res.report.epochs.size(); ++e) {
        const EpochRecord& r = res.report.epochs[e];
        std::printf("epoch %zu: loss %.4f, val epe %.2f (%.1fs)\n", e + 1, r.mean_loss,
                    r.val_epe_mean, r.seconds);
      }
    } else if (*c_infer) {
      AppConfig cfg = load_cfg(config_path);
      KernelSet ks = load_kernels(inf_kernels);
      BinaryImage design = binarize(load_png(inf_design, ks.pixel_size), 0.5);
      UpdateOperator op = UpdateOperator::load(inf_ckpt);
      InferConfig icfg = make_infer_config(cfg, ks);
      if (inf_tmax > 0) icfg.t_max = inf_tmax;
      if (inf_tol >= 0.0) icfg.residual_tol = inf_tol;
      InferResult r = infer(design, op, icfg);
      OutputGuard g;
      g.add_file(inf_out);
      save_png(to_gray(r.mask), inf_out);
      g.release();
      for (size_t t = 0; t < r.residuals.size(); ++t)
        std::printf("r[%zu] = %.6g\n", t + 1, r.residuals[t]);
      std::printf("wrote %s after %zu steps\n", inf_out.c_str(), r.residuals.size());
    } else if (*c_eval) {
      AppConfig cfg = load_cfg(config_path);
      Dataset ds = load_dataset(eval_dataset);
      std::string kpath = resolve_near(eval_dataset, ds.manifest.kernel_file);
      KernelSet ks = load_kernels(kpath);
      UpdateOperator op = UpdateOperator::load(eval_ckpt);
      EvalSummary s = evaluate(ds, op, make_eval_config(cfg, ks));
      std::string csv = eval_csv(s);
      if (!eval_out.empty()) {
        OutputGuard g;
        g.add_file(eval_out);
        write_text(eval_out, csv);
        g.release();
      }
      std::fputs(csv.c_str(), stdout);
    } else if (*c_gc) {
      uint64_t s = c_gc->count("--seed") ? seed : 42;
      std::vector<GradCheckEntry> entries = gradcheck_suite(s);
      for (const GradCheckEntry& e : entries)
        std::printf("%-22s max_rel_err %.3e %s\n", e.primitive.c_str(), e.max_rel_err,
                    e.pass ? "PASS" : "FAIL");
      return gradcheck_all_pass(entries) ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

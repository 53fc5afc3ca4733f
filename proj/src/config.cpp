#include "ililt/config.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>

#include "json.hpp"

namespace ililt {
namespace {

using nlohmann::json;

void check_keys(const json& j, const char* ctx, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::runtime_error(std::string("config: ") + ctx + " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::runtime_error(std::string("config: unknown key '") + item.key() + "' in " + ctx);
  }
}

json to_json(const AppConfig& c) {
  json j;
  j["kernels"] = {{"seed", c.kernels.seed},
                  {"count", c.kernels.count},
                  {"size", c.kernels.size},
                  {"sigma_nm", c.kernels.sigma_nm},
                  {"pixel_size_nm", c.kernels.pixel_size_nm}};
  j["bounds"] = {{"side", c.bounds.side},
                 {"pixel_size", c.bounds.pixel_size},
                 {"margin", c.bounds.margin},
                 {"min_rects", c.bounds.min_rects},
                 {"max_rects", c.bounds.max_rects},
                 {"min_width", c.bounds.min_width},
                 {"max_width", c.bounds.max_width},
                 {"min_space", c.bounds.min_space},
                 {"attempt_cap", c.bounds.attempt_cap}};
  j["dataset_tiles"] = c.dataset_tiles;
  j["process"] = {{"i_th", c.process.i_th},
                  {"dose_scale", c.process.dose_scale},
                  {"kernel_label", c.process.kernel_label}};
  j["relax"] = {{"beta_m", c.relax.beta_m}, {"beta_z", c.relax.beta_z}};
  j["ilt"] = {{"max_iters", c.ilt.max_iters},
              {"step_size", c.ilt.step_size},
              {"stop_rel_tol", c.ilt.stop_rel_tol},
              {"keep_best", c.ilt.keep_best},
              {"snapshot_interval", c.ilt.snapshot_interval}};
  j["backbone"] = {{"patch_size", c.backbone.patch_size},
                   {"k_max", c.backbone.k_max},
                   {"hidden", c.backbone.hidden}};
  j["train"] = {{"T", c.train.T},
                {"epochs", c.train.epochs},
                {"lr", c.train.lr},
                {"lr_decay", c.train.lr_decay},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size},
                {"weight_tying", c.train.weight_tying},
                {"backprop_through_litho", c.train.backprop_through_litho},
                {"val_fraction", c.train.val_fraction}};
  j["infer"] = {{"t_max", c.infer.t_max}, {"residual_tol", c.infer.residual_tol}};
  j["epe"] = {{"sample_interval", c.epe.sample_interval},
              {"tolerance", c.epe.tolerance},
              {"search_window", c.epe.search_window}};
  j["dose_delta"] = c.dose_delta;
  return j;
}

AppConfig from_json(const json& j) {
  AppConfig c;
  check_keys(j, "document",
             {"kernels", "bounds", "dataset_tiles", "process", "relax", "ilt", "backbone",
              "train", "infer", "epe", "dose_delta"});
  if (j.contains("kernels")) {
    const json& k = j["kernels"];
    check_keys(k, "kernels", {"seed", "count", "size", "sigma_nm", "pixel_size_nm"});
    c.kernels.seed = k.value("seed", c.kernels.seed);
    c.kernels.count = k.value("count", c.kernels.count);
    c.kernels.size = k.value("size", c.kernels.size);
    c.kernels.sigma_nm = k.value("sigma_nm", c.kernels.sigma_nm);
    c.kernels.pixel_size_nm = k.value("pixel_size_nm", c.kernels.pixel_size_nm);
  }
  if (j.contains("bounds")) {
    const json& b = j["bounds"];
    check_keys(b, "bounds",
               {"side", "pixel_size", "margin", "min_rects", "max_rects", "min_width",
                "max_width", "min_space", "attempt_cap"});
    c.bounds.side = b.value("side", c.bounds.side);
    c.bounds.pixel_size = b.value("pixel_size", c.bounds.pixel_size);
    c.bounds.margin = b.value("margin", c.bounds.margin);
    c.bounds.min_rects = b.value("min_rects", c.bounds.min_rects);
    c.bounds.max_rects = b.value("max_rects", c.bounds.max_rects);
    c.bounds.min_width = b.value("min_width", c.bounds.min_width);
    c.bounds.max_width = b.value("max_width", c.bounds.max_width);
    c.bounds.min_space = b.value("min_space", c.bounds.min_space);
    c.bounds.attempt_cap = b.value("attempt_cap", c.bounds.attempt_cap);
  }
  c.dataset_tiles = j.value("dataset_tiles", c.dataset_tiles);
  if (j.contains("process")) {
    const json& p = j["process"];
    check_keys(p, "process", {"i_th", "dose_scale", "kernel_label"});
    c.process.i_th = p.value("i_th", c.process.i_th);
    c.process.dose_scale = p.value("dose_scale", c.process.dose_scale);
    c.process.kernel_label = p.value("kernel_label", c.process.kernel_label);
  }
  if (j.contains("relax")) {
    const json& r = j["relax"];
    check_keys(r, "relax", {"beta_m", "beta_z"});
    c.relax.beta_m = r.value("beta_m", c.relax.beta_m);
    c.relax.beta_z = r.value("beta_z", c.relax.beta_z);
  }
  if (j.contains("ilt")) {
    const json& i = j["ilt"];
    check_keys(i, "ilt",
               {"max_iters", "step_size", "stop_rel_tol", "keep_best", "snapshot_interval"});
    c.ilt.max_iters = i.value("max_iters", c.ilt.max_iters);
    c.ilt.step_size = i.value("step_size", c.ilt.step_size);
    c.ilt.stop_rel_tol = i.value("stop_rel_tol", c.ilt.stop_rel_tol);
    c.ilt.keep_best = i.value("keep_best", c.ilt.keep_best);
    c.ilt.snapshot_interval = i.value("snapshot_interval", c.ilt.snapshot_interval);
  }
  if (j.contains("backbone")) {
    const json& b = j["backbone"];
    check_keys(b, "backbone", {"patch_size", "k_max", "hidden"});
    c.backbone.patch_size = b.value("patch_size", c.backbone.patch_size);
    c.backbone.k_max = b.value("k_max", c.backbone.k_max);
    c.backbone.hidden = b.value("hidden", c.backbone.hidden);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train",
               {"T", "epochs", "lr", "lr_decay", "weight_decay", "batch_size", "weight_tying",
                "backprop_through_litho", "val_fraction"});
    c.train.T = t.value("T", c.train.T);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.lr = t.value("lr", c.train.lr);
    c.train.lr_decay = t.value("lr_decay", c.train.lr_decay);
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.weight_tying = t.value("weight_tying", c.train.weight_tying);
    c.train.backprop_through_litho =
        t.value("backprop_through_litho", c.train.backprop_through_litho);
    c.train.val_fraction = t.value("val_fraction", c.train.val_fraction);
  }
  if (j.contains("infer")) {
    const json& i = j["infer"];
    check_keys(i, "infer", {"t_max", "residual_tol"});
    c.infer.t_max = i.value("t_max", c.infer.t_max);
    c.infer.residual_tol = i.value("residual_tol", c.infer.residual_tol);
  }
  if (j.contains("epe")) {
    const json& e = j["epe"];
    check_keys(e, "epe", {"sample_interval", "tolerance", "search_window"});
    c.epe.sample_interval = e.value("sample_interval", c.epe.sample_interval);
    c.epe.tolerance = e.value("tolerance", c.epe.tolerance);
    c.epe.search_window = e.value("search_window", c.epe.search_window);
  }
  c.dose_delta = j.value("dose_delta", c.dose_delta);
  return c;
}

}  // namespace

AppConfig load_app_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config parse error: " + std::string(e.what()));
  }
  return from_json(j);
}

void save_app_config(const AppConfig& c, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write config: " + path);
  f << app_config_json(c);
}

std::string app_config_json(const AppConfig& c) { return to_json(c).dump(2) + "\n"; }

IltConfig make_ilt_config(const AppConfig& c) {
  IltConfig cfg;
  cfg.max_iters = c.ilt.max_iters;
  cfg.step_size = c.ilt.step_size;
  cfg.stop_rel_tol = c.ilt.stop_rel_tol;
  cfg.keep_best = c.ilt.keep_best;
  cfg.snapshot_interval = c.ilt.snapshot_interval;
  cfg.relax = c.relax;
  cfg.nominal = c.process;
  return cfg;
}

TrainConfig make_train_config(const AppConfig& c, uint64_t seed, const std::string& ckpt_dir) {
  TrainConfig cfg;
  cfg.T = c.train.T;
  cfg.epochs = c.train.epochs;
  cfg.lr = c.train.lr;
  cfg.lr_decay = c.train.lr_decay;
  cfg.weight_decay = c.train.weight_decay;
  cfg.batch_size = c.train.batch_size;
  cfg.seed = seed;
  cfg.weight_tying = c.train.weight_tying;
  cfg.backprop_through_litho = c.train.backprop_through_litho;
  cfg.val_fraction = c.train.val_fraction;
  cfg.backbone = c.backbone;
  cfg.process = c.process;
  cfg.relax = c.relax;
  cfg.checkpoint_dir = ckpt_dir;
  return cfg;
}

InferConfig make_infer_config(const AppConfig& c, const KernelSet& ks) {
  InferConfig cfg;
  cfg.t_max = c.infer.t_max;
  cfg.residual_tol = c.infer.residual_tol;
  cfg.litho = LithoContext{ks, c.process, c.relax};
  return cfg;
}

EvalConfig make_eval_config(const AppConfig& c, const KernelSet& ks) {
  EvalConfig cfg;
  cfg.infer = make_infer_config(c, ks);
  cfg.epe = c.epe;
  cfg.dose_delta = c.dose_delta;
  return cfg;
}

}  // namespace ililt

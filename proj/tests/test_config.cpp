#include <fstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "ililt/config.hpp"

using namespace ililt;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  REQUIRE(f.good());
  f << text;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults survive a save/load round trip") {
  testutil::TempDir dir("cfg");
  std::string path = dir.file("config.json");
  AppConfig c;
  c.kernels.count = 6;
  c.kernels.seed = 99;
  c.bounds.side = 128;
  c.dataset_tiles = 17;
  c.process.dose_scale = 1.02;
  c.relax.beta_z = 55.0;
  c.ilt.max_iters = 321;
  c.ilt.stop_rel_tol = 0.004;
  c.backbone.hidden = 8;
  c.train.T = 6;
  c.train.weight_tying = false;
  c.infer.t_max = 12;
  c.epe.tolerance = 12.0;
  c.dose_delta = 0.03;
  save_app_config(c, path);

  AppConfig r = load_app_config(path);
  CHECK(r.kernels.count == 6);
  CHECK(r.kernels.seed == 99);
  CHECK(r.kernels.size == 21);
  CHECK(r.bounds.side == 128);
  CHECK(r.bounds.margin == 200.0);
  CHECK(r.dataset_tiles == 17);
  CHECK(r.process.dose_scale == 1.02);
  CHECK(r.process.i_th == 0.225);
  CHECK(r.relax.beta_z == 55.0);
  CHECK(r.relax.beta_m == 4.0);
  CHECK(r.ilt.max_iters == 321);
  CHECK(r.ilt.stop_rel_tol == 0.004);
  CHECK(r.backbone.hidden == 8);
  CHECK(r.backbone.patch_size == 32);
  CHECK(r.train.T == 6);
  CHECK(r.train.weight_tying == false);
  CHECK(r.train.lr == 0.004);
  CHECK(r.infer.t_max == 12);
  CHECK(r.epe.tolerance == 12.0);
  CHECK(r.epe.sample_interval == 40.0);
  CHECK(r.dose_delta == 0.03);
}

TEST_CASE("missing sections fall back to defaults") {
  testutil::TempDir dir("cfg2");
  std::string path = dir.file("partial.json");
  write_text(path, "{\"train\": {\"T\": 8}, \"dataset_tiles\": 4}\n");
  AppConfig c = load_app_config(path);
  CHECK(c.train.T == 8);
  CHECK(c.train.epochs == 5);
  CHECK(c.dataset_tiles == 4);
  CHECK(c.kernels.count == 8);
  CHECK(c.ilt.max_iters == 400);
}

TEST_CASE("unknown keys are rejected with the offending name") {
  testutil::TempDir dir("cfg3");
  std::string top = dir.file("top.json");
  write_text(top, "{\"learning_rate\": 0.1}\n");
  CHECK_THROWS_WITH_AS((void)load_app_config(top), doctest::Contains("learning_rate"),
                       std::runtime_error);

  std::string nested = dir.file("nested.json");
  write_text(nested, "{\"train\": {\"lr\": 0.1, \"momentum\": 0.9}}\n");
  CHECK_THROWS_WITH_AS((void)load_app_config(nested), doctest::Contains("momentum"),
                       std::runtime_error);

  std::string bad = dir.file("broken.json");
  write_text(bad, "{\"train\": \n");
  CHECK_THROWS_WITH_AS((void)load_app_config(bad), doctest::Contains("parse"),
                       std::runtime_error);
  CHECK_THROWS_AS((void)load_app_config(dir.file("absent.json")), std::runtime_error);
}

TEST_CASE("module configs are assembled from the shared document") {
  AppConfig c;
  c.ilt.max_iters = 55;
  c.ilt.step_size = 1.5;
  c.relax.beta_m = 6.0;
  c.process.i_th = 0.3;
  c.train.T = 7;
  c.train.lr = 0.01;
  c.backbone.hidden = 4;
  c.infer.t_max = 9;
  c.infer.residual_tol = 0.001;
  c.epe.search_window = 96.0;
  c.dose_delta = 0.04;

  IltConfig ic = make_ilt_config(c);
  CHECK(ic.max_iters == 55);
  CHECK(ic.step_size == 1.5);
  CHECK(ic.relax.beta_m == 6.0);
  CHECK(ic.nominal.i_th == 0.3);

  TrainConfig tc = make_train_config(c, 77, "ckpts");
  CHECK(tc.T == 7);
  CHECK(tc.lr == 0.01);
  CHECK(tc.seed == 77);
  CHECK(tc.backbone.hidden == 4);
  CHECK(tc.process.i_th == 0.3);
  CHECK(tc.relax.beta_m == 6.0);
  CHECK(tc.checkpoint_dir == "ckpts");

  KernelSet ks = synth_kernels(3, 2, 7, 40.0, 8.0);
  InferConfig inf = make_infer_config(c, ks);
  CHECK(inf.t_max == 9);
  CHECK(inf.residual_tol == 0.001);
  CHECK(inf.litho.kernels.count == 2);
  CHECK(inf.litho.process.i_th == 0.3);

  EvalConfig ec = make_eval_config(c, ks);
  CHECK(ec.epe.search_window == 96.0);
  CHECK(ec.dose_delta == 0.04);
  CHECK(ec.infer.t_max == 9);
}

TEST_CASE("the emitted document enumerates every section") {
  std::string s = app_config_json(AppConfig{});
  for (const char* key : {"kernels", "bounds", "dataset_tiles", "process", "relax", "ilt",
                          "backbone", "train", "infer", "epe", "dose_delta"})
    CHECK(s.find(std::string("\"") + key + "\"") != std::string::npos);
}

}  // TEST_SUITE

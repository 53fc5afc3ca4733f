// Acceptance gate: the ten shipping criteria, one pass/fail line each.
// Usage: acceptance <path-to-ililt-cli> <scratch-dir>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ililt/backbone.hpp"
#include "ililt/config.hpp"
#include "ililt/dataset.hpp"
#include "ililt/gradcheck.hpp"
#include "ililt/ilt.hpp"
#include "ililt/litho.hpp"
#include "ililt/metrics.hpp"
#include "ililt/raster.hpp"
#include "ililt/rng.hpp"
#include "ililt/trainer.hpp"

namespace fs = std::filesystem;
using namespace ililt;

namespace {

int g_failures = 0;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void report(int idx, bool pass, double t0, const std::string& detail) {
  std::printf("AC-%d %s (%.1fs)%s%s\n", idx, pass ? "PASS" : "FAIL", now_s() - t0,
              detail.empty() ? "" : ": ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

// Independent EPE oracle: same site enumeration, but the wafer transition
// search is a global minimum over every matching crossing instead of the
// production incremental outward scan.

struct BruteSite {
  bool found = false;
  double measured = 0.0;
  bool violating = false;
};

std::vector<double> brute_positions(double start, double end, double interval) {
  std::vector<double> pos;
  double mid = 0.5 * (start + end);
  pos.push_back(mid);
  for (int k = 1;; ++k) {
    bool any = false;
    if (mid - k * interval >= start) {
      pos.push_back(mid - k * interval);
      any = true;
    }
    if (mid + k * interval < end) {
      pos.push_back(mid + k * interval);
      any = true;
    }
    if (!any) break;
  }
  return pos;
}

std::vector<BruteSite> brute_epe(const BinaryImage& wafer, const BinaryImage& design,
                                 const EpeConfig& cfg) {
  const double px = design.pixel_size;
  const int w = design.width, h = design.height;
  const double reach = std::floor(cfg.search_window / px) * px;
  auto wat = [&](int y, int x) -> int {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return wafer.at(y, x) ? 1 : 0;
  };

  std::vector<BruteSite> sites;
  for (const EdgeSegment& seg : extract_edges(design)) {
    for (double pos : brute_positions(seg.span_start, seg.span_end, cfg.sample_interval)) {
      int along = static_cast<int>(std::floor(pos / px));
      BruteSite s;
      double best = 1e300;
      if (seg.axis == EdgeAxis::Vertical) {
        int c0 = static_cast<int>(std::lround(seg.fixed_coord / px));
        for (int c = 0; c <= w; ++c) {
          int left = wat(along, c - 1), right = wat(along, c);
          bool match = seg.inside_direction > 0 ? (left == 0 && right == 1)
                                                : (left == 1 && right == 0);
          if (match) best = std::min(best, std::abs(c - c0) * px);
        }
      } else {
        int r0 = static_cast<int>(std::lround(seg.fixed_coord / px));
        for (int r = 0; r <= h; ++r) {
          int above = wat(r - 1, along), below = wat(r, along);
          bool match = seg.inside_direction > 0 ? (above == 0 && below == 1)
                                                : (above == 1 && below == 0);
          if (match) best = std::min(best, std::abs(r - r0) * px);
        }
      }
      s.found = best <= reach + 1e-9;
      s.measured = s.found ? best : 0.0;
      s.violating = !s.found || s.measured > cfg.tolerance;
      sites.push_back(s);
    }
  }
  return sites;
}

Dataset make_corpus(int n, uint64_t seed, const KernelSet& ks, const IltConfig& icfg,
                    const TileBounds& b) {
  Dataset ds;
  uint64_t s = seed;
  for (int i = 0; i < n; ++i) {
    bool done = false;
    for (int tries = 0; tries < 64 && !done; ++tries) {
      uint64_t tile_seed = s++;
      try {
        GenTile gt = gen_tile(tile_seed, b);
        IltResult r = ilt_optimize(gt.design, ks, icfg);
        Sample smp;
        smp.design = std::move(gt.design);
        smp.golden = std::move(r.mask);
        smp.seed = tile_seed;
        char id[16];
        std::snprintf(id, sizeof(id), "%04d", i);
        smp.id = id;
        ds.samples.push_back(std::move(smp));
        done = true;
      } catch (const TileGenError&) {
      } catch (const IltDivergence&) {
      }
    }
    if (!done) throw std::runtime_error("corpus: tile generation stalled");
    if ((i + 1) % 20 == 0) {
      std::fprintf(stderr, "corpus: %d/%d tiles\n", i + 1, n);
      std::fflush(stderr);
    }
  }
  return ds;
}

int run_cmd(const std::string& cmd) {
  std::fprintf(stderr, "+ %s\n", cmd.c_str());
  std::fflush(stderr);
  int st = std::system(cmd.c_str());
  if (st == -1) return -1;
  if (WIFEXITED(st)) return WEXITSTATUS(st);
  return 128;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <ililt-cli> <scratch-dir>\n");
    return 2;
  }
  const std::string cli = argv[1];
  const std::string scratch = argv[2];
  fs::create_directories(scratch);

  const AppConfig desk;  // shipping defaults drive every criterion
  const KernelSet desk_ks =
      synth_kernels(desk.kernels.seed, desk.kernels.count, desk.kernels.size,
                    desk.kernels.sigma_nm, desk.kernels.pixel_size_nm);
  const IltConfig desk_ilt = make_ilt_config(desk);
  const LithoContext desk_lc{desk_ks, desk.process, desk.relax};

  // AC-1: forward convolution against the direct O(n^4) spatial sum
  {
    double t0 = now_s();
    try {
      std::mt19937_64 rng(101);
      KernelSet ks = synth_kernels(11, 2, 9, 40.0, 8.0);
      LithoSimulator sim(ks, 32, 32);
      double worst = 0.0;
      for (int i = 0; i < 10; ++i) {
        GrayImage mask = testutil::random_gray(rng, 32, 32, 8.0);
        GrayImage fast = sim.simulate_intensity(mask);
        GrayImage slow = testutil::naive_intensity(mask, ks);
        for (size_t k = 0; k < fast.size(); ++k)
          worst = std::max(worst, std::abs(fast.data[k] - slow.data[k]));
      }
      report(1, worst < 1e-6, t0, fmt("max abs err %.3e over 10 masks (bound 1e-6)", worst));
    } catch (const std::exception& e) {
      report(1, false, t0, e.what());
    }
  }

  // AC-2: ILT gradient vs central finite differences
  {
    double t0 = now_s();
    try {
      std::mt19937_64 rng(202);
      LithoSimulator sim(desk_ks, 64, 64);
      const double eps = 1e-4;
      double worst = 0.0;
      for (int inst = 0; inst < 5; ++inst) {
        BinaryImage design = testutil::random_binary(rng, 64, 64, 8.0, 0.35);
        GrayImage m_prime = testutil::random_gray(rng, 64, 64, 8.0);
        GrayImage g = ilt_gradient(m_prime, design, sim, desk_ilt);
        auto loss_at = [&](const GrayImage& mp) {
          GrayImage mask = sigmoid_mask(mp, desk_ilt.relax);
          GrayImage z = sigmoid_resist(sim.simulate_intensity(mask), desk_ilt.nominal,
                                       desk_ilt.relax);
          return ilt_loss(z, design);
        };
        for (int p = 0; p < 20; ++p) {
          size_t i = static_cast<size_t>(uint_below(rng, 64 * 64));
          GrayImage plus = m_prime, minus = m_prime;
          plus.data[i] += eps;
          minus.data[i] -= eps;
          double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * eps);
          double rel = std::abs(fd - g.data[i]) /
                       std::max({std::abs(fd), std::abs(g.data[i]), 1e-6});
          worst = std::max(worst, rel);
        }
      }
      report(2, worst < 1e-3, t0,
             fmt("max rel err %.3e over 100 probes (bound 1e-3)", worst));
    } catch (const std::exception& e) {
      report(2, false, t0, e.what());
    }
  }

  // AC-3: finite-difference gradcheck of every primitive and the composite
  {
    double t0 = now_s();
    try {
      auto entries = gradcheck_suite(42);
      bool pass = gradcheck_all_pass(entries) && !entries.empty();
      double worst = 0.0;
      std::string bad;
      for (const auto& e : entries) {
        worst = std::max(worst, e.max_rel_err);
        if (!e.pass) bad += " " + e.primitive;
      }
      report(3, pass, t0,
             pass ? fmt("%zu primitives, max rel err %.3e (bound 1e-5)", entries.size(), worst)
                  : "failing:" + bad);
    } catch (const std::exception& e) {
      report(3, false, t0, e.what());
    }
  }

  // AC-4: numerical ILT convergence on a 400x400 nm square at 256x256
  {
    double t0 = now_s();
    try {
      const int side = 256, sq = 50;  // 50 px * 8 nm = 400 nm
      BinaryImage design = testutil::rect_design(side, 8.0, (side - sq) / 2, (side - sq) / 2,
                                                 sq, sq);
      IltConfig cfg = desk_ilt;
      cfg.max_iters = 200;
      cfg.stop_rel_tol = 0.0;
      IltResult res = ilt_optimize(design, desk_ks, cfg);
      double drop = 1.0 - res.trace.best_loss / res.trace.losses.front();

      LithoSimulator sim(desk_ks, side, side);
      BinaryImage wafer =
          resist_threshold(sim.simulate_intensity(to_gray(res.mask)), desk.process);
      int epe = epe_violations(wafer, design, desk.epe).violations;
      bool pass = drop >= 0.90 && epe == 0;
      report(4, pass, t0, fmt("loss drop %.1f%% (need >= 90%%), epe violations %d (need 0)",
                              100.0 * drop, epe));
    } catch (const std::exception& e) {
      report(4, false, t0, e.what());
    }
  }

  // AC-5/6/9 share the 200-tile corpus and the T=4 model
  Dataset corpus;
  bool corpus_ok = false;
  TrainResult t4, t1;
  bool t4_ok = false;
  Dataset held, train_ds;

  // AC-5: learning signal, T=4 vs one-shot T=1 on a held-out split
  {
    double t0 = now_s();
    try {
      corpus = make_corpus(200, 3001, desk_ks, desk_ilt, desk.bounds);
      corpus_ok = true;
      std::fprintf(stderr, "corpus done (%.0fs)\n", now_s() - t0);
      for (size_t i = 0; i < corpus.samples.size(); ++i)
        (i < 180 ? train_ds : held).samples.push_back(corpus.samples[i]);

      TrainConfig c4 = make_train_config(desk, 0, "");
      c4.T = 4;
      t4 = train(train_ds, desk_ks, c4);
      t4_ok = true;
      std::fprintf(stderr, "t4 trained (%.0fs)\n", now_s() - t0);

      TrainConfig c1 = c4;
      c1.T = 1;
      t1 = train(train_ds, desk_ks, c1);
      std::fprintf(stderr, "t1 trained (%.0fs)\n", now_s() - t0);

      LithoSimulator sim(desk_ks, desk.bounds.side, desk.bounds.side);
      double l2_4 = 0.0, l2_1 = 0.0, epe_4 = 0.0, epe_1 = 0.0;
      for (const Sample& s : held.samples) {
        GrayImage g = to_gray(s.golden);
        Trajectory tr4 = unroll(s.design, t4.ops[0], 4, desk_lc);
        Trajectory tr1 = unroll(s.design, t1.ops[0], 1, desk_lc);
        l2_4 += l2_error(tr4.masks.back(), g);
        l2_1 += l2_error(tr1.masks.back(), g);
        BinaryImage w4 = resist_threshold(
            sim.simulate_intensity(to_gray(binarize(tr4.masks.back(), 0.5))), desk.process);
        BinaryImage w1 = resist_threshold(
            sim.simulate_intensity(to_gray(binarize(tr1.masks.back(), 0.5))), desk.process);
        epe_4 += epe_violations(w4, s.design, desk.epe).violations;
        epe_1 += epe_violations(w1, s.design, desk.epe).violations;
      }
      const double n = static_cast<double>(held.samples.size());
      l2_4 /= n;
      l2_1 /= n;
      epe_4 /= n;
      epe_1 /= n;
      bool pass = l2_4 <= 0.75 * l2_1 && epe_4 < epe_1;
      report(5, pass, t0,
             fmt("held-out mask l2 %.2f vs %.2f (need <= 75%%), epe %.2f vs %.2f (need lower)",
                 l2_4, l2_1, epe_4, epe_1));
    } catch (const std::exception& e) {
      report(5, false, t0, e.what());
    }
  }

  // AC-6: fixed-point stability of the T=4 model run to t=8
  {
    double t0 = now_s();
    try {
      if (!t4_ok) throw std::runtime_error("no trained T=4 model");
      LithoSimulator sim(desk_ks, desk.bounds.side, desk.bounds.side);
      bool stable = true;
      double epe8 = 0.0, epe4 = 0.0;
      for (const Sample& s : held.samples) {
        InferConfig ic;
        ic.t_max = 8;
        ic.residual_tol = 0.0;
        ic.litho = desk_lc;
        InferResult r8 = infer(s.design, t4.ops[0], ic);
        double head = 0.0, tail = 0.0;
        for (int t = 1; t <= 4; ++t) head = std::max(head, r8.residuals[t - 1]);
        for (int t = 5; t <= 8; ++t) tail = std::max(tail, r8.residuals[t - 1]);
        if (tail > head) stable = false;

        ic.t_max = 4;
        InferResult r4 = infer(s.design, t4.ops[0], ic);
        BinaryImage w8 = resist_threshold(sim.simulate_intensity(to_gray(r8.mask)),
                                          desk.process);
        BinaryImage w4 = resist_threshold(sim.simulate_intensity(to_gray(r4.mask)),
                                          desk.process);
        epe8 += epe_violations(w8, s.design, desk.epe).violations;
        epe4 += epe_violations(w4, s.design, desk.epe).violations;
      }
      const double n = static_cast<double>(held.samples.size());
      epe8 /= n;
      epe4 /= n;
      bool pass = stable && epe8 <= epe4 + 1.0;
      report(6, pass, t0,
             fmt("residual tail <= head on all tiles: %s; epe@8 %.2f vs epe@4 %.2f (+1 allowed)",
                 stable ? "yes" : "no", epe8, epe4));
    } catch (const std::exception& e) {
      report(6, false, t0, e.what());
    }
  }

  // AC-7: Eq-13 weighting exactness at T=8
  {
    double t0 = now_s();
    try {
      std::mt19937_64 rng(707);
      BinaryImage golden = testutil::random_binary(rng, 16, 16, 8.0, 0.5);
      std::vector<GrayImage> masks;
      for (int i = 0; i < 5; ++i) masks.push_back(testutil::random_gray(rng, 16, 16, 8.0));
      const double w[] = {std::exp(-0.5), std::exp(-0.375), std::exp(-0.25), std::exp(-0.125),
                          1.0};
      double want = 0.0;
      for (int i = 0; i < 5; ++i) {
        double sq = 0.0;
        for (size_t k = 0; k < masks[i].size(); ++k) {
          double d = masks[i].data[k] - (golden.data[k] ? 1.0 : 0.0);
          sq += d * d;
        }
        want += w[i] * sq;
      }
      double got = trajectory_loss(masks, golden, 8);
      double err = std::abs(got - want) / std::max(1.0, std::abs(want));
      report(7, err <= 1e-12, t0, fmt("rel deviation %.2e (bound 1e-12)", err));
    } catch (const std::exception& e) {
      report(7, false, t0, e.what());
    }
  }

  // AC-8: metric oracles
  {
    double t0 = now_s();
    try {
      using testutil::rect_design;
      std::vector<std::pair<BinaryImage, BinaryImage>> cases;  // (wafer, design)
      BinaryImage sq = rect_design(48, 8.0, 8, 8, 28, 28);
      cases.emplace_back(sq, sq);
      cases.emplace_back(rect_design(48, 8.0, 10, 10, 24, 24), sq);  // erode 2 px
      cases.emplace_back(rect_design(48, 8.0, 11, 11, 22, 22), sq);  // erode 3 px
      cases.emplace_back(rect_design(48, 8.0, 6, 6, 32, 32), sq);    // dilate 2 px
      cases.emplace_back(BinaryImage::zeros(48, 48, 8.0), sq);       // empty
      {
        BinaryImage full = BinaryImage::zeros(48, 48, 8.0);
        for (auto& v : full.data) v = 1;
        cases.emplace_back(full, sq);
      }
      {
        BinaryImage notch = sq;  // local bite on the top edge
        for (int y = 8; y < 11; ++y)
          for (int x = 21; x < 24; ++x) notch.at(y, x) = 0;
        cases.emplace_back(notch, sq);
      }
      {
        BinaryImage stripe = rect_design(48, 8.0, 10, 8, 26, 28);  // receded left edge
        for (int y = 8; y < 36; ++y) stripe.at(y, 4) = 1;          // detached line outside
        cases.emplace_back(stripe, sq);
      }
      {
        BinaryImage two = rect_design(64, 8.0, 6, 6, 16, 16);
        for (int y = 40; y < 56; ++y)
          for (int x = 38; x < 56; ++x) two.at(y, x) = 1;
        cases.emplace_back(two, two);
      }
      {
        BinaryImage shifted = BinaryImage::zeros(48, 48, 8.0);
        for (int y = 0; y < 47; ++y)
          for (int x = 0; x < 47; ++x)
            if (sq.at(y, x)) shifted.at(y + 1, x + 1) = 1;
        cases.emplace_back(shifted, sq);
      }

      bool epe_ok = true;
      for (size_t ci = 0; ci < cases.size(); ++ci) {
        bool case_ok = true;
        EpeReport got = epe_violations(cases[ci].first, cases[ci].second, desk.epe);
        std::vector<BruteSite> want = brute_epe(cases[ci].first, cases[ci].second, desk.epe);
        if (got.sites.size() != want.size()) case_ok = false;
        int want_viol = 0;
        for (size_t i = 0; case_ok && i < want.size(); ++i) {
          const EpeSite& a = got.sites[i];
          const BruteSite& b = want[i];
          if (a.contour_found != b.found || a.violating != b.violating ||
              (a.contour_found && std::abs(a.measured_epe - b.measured) > 1e-9))
            case_ok = false;
          if (b.violating) ++want_viol;
        }
        if (case_ok && got.violations != want_viol) case_ok = false;
        if (!case_ok) {
          std::fprintf(stderr, "AC-8 mismatch on case %zu\n", ci);
          epe_ok = false;
        }
      }

      bool pvb_ok = true;
      std::mt19937_64 rng(808);
      ProcessCondition inner = desk.process, outer = desk.process;
      inner.dose_scale = desk.process.dose_scale * (1.0 - desk.dose_delta);
      outer.dose_scale = desk.process.dose_scale * (1.0 + desk.dose_delta);
      for (int i = 0; i < 20; ++i) {
        BinaryImage mask = testutil::random_binary(rng, 64, 64, 8.0, 0.4);
        double band = pvb_area(mask, desk_ks, desk.process, inner, outer);
        if (band < 0.0) pvb_ok = false;
        if (pvb_area(mask, desk_ks, desk.process, desk.process, desk.process) != 0.0)
          pvb_ok = false;
      }
      report(8, epe_ok && pvb_ok, t0,
             fmt("epe oracle %s on 10 cases, pvb containment %s on 20 masks",
                 epe_ok ? "matched" : "MISMATCH", pvb_ok ? "held" : "BROKEN"));
    } catch (const std::exception& e) {
      report(8, false, t0, e.what());
    }
  }

  // AC-9: untied (L2O) plumbing on 20 tiles
  {
    double t0 = now_s();
    try {
      if (!corpus_ok) throw std::runtime_error("no corpus");
      Dataset twenty;
      for (size_t i = 0; i < 20; ++i) twenty.samples.push_back(corpus.samples[i]);
      TrainConfig cfg = make_train_config(desk, 0, "");
      cfg.T = 4;
      cfg.weight_tying = false;
      cfg.epochs = 1;
      TrainResult r = train(twenty, desk_ks, cfg);

      bool pass = r.ops.size() == 4;
      int64_t tied = UpdateOperator(cfg.backbone, 0).count_params();
      int64_t total = 0;
      for (UpdateOperator& op : r.ops) total += op.count_params();
      pass = pass && total == 4 * tied;
      for (size_t a = 0; a < r.ops.size() && pass; ++a)
        for (size_t b = a + 1; b < r.ops.size() && pass; ++b)
          if (r.ops[a].parameters()[0]->value.data == r.ops[b].parameters()[0]->value.data)
            pass = false;  // step-indexed sets must not share values
      report(9, pass, t0, fmt("%zu sets, %lld params total (tied %lld)", r.ops.size(),
                              static_cast<long long>(total), static_cast<long long>(tied)));
    } catch (const std::exception& e) {
      report(9, false, t0, e.what());
    }
  }

  // AC-10: CLI end-to-end smoke
  {
    double t0 = now_s();
    try {
      const std::string wd = scratch + "/ac10";
      fs::remove_all(wd);
      fs::create_directories(wd);
      AppConfig cfg;  // desk defaults at a smaller tile for the smoke budget
      cfg.bounds.side = 128;
      cfg.dataset_tiles = 8;
      cfg.train.epochs = 1;
      save_app_config(cfg, wd + "/config.json");

      bool pass = true;
      auto step = [&](const std::string& cmd) {
        if (!pass) return;
        if (run_cmd(cmd + " > " + wd + "/last.log 2>&1") != 0) {
          pass = false;
          std::fprintf(stderr, "AC-10 failing command: %s\n%s\n", cmd.c_str(),
                       slurp(wd + "/last.log").c_str());
        }
      };
      const std::string cfg_arg = " --config " + wd + "/config.json";
      step(cli + " gen-kernels" + cfg_arg + " --out " + wd + "/kernels.bin");
      step(cli + " gen-dataset" + cfg_arg + " --kernels " + wd + "/kernels.bin --out " + wd +
           "/ds --tiles 8");
      step(cli + " train" + cfg_arg + " --dataset " + wd + "/ds --out " + wd + "/run");
      step(cli + " infer" + cfg_arg + " --design " + wd + "/ds/design_0000.png --ckpt " + wd +
           "/run/epoch_01.ckpt --kernels " + wd + "/kernels.bin --out " + wd + "/mask_out.png");
      step(cli + " eval" + cfg_arg + " --dataset " + wd + "/ds --ckpt " + wd +
           "/run/epoch_01.ckpt --out " + wd + "/eval.csv");

      std::string csv = slurp(wd + "/eval.csv");
      bool csv_ok = csv.rfind("tile_id,epe_violations,pvb_nm2,seconds", 0) == 0 &&
                    csv.find("\nmean,") != std::string::npos;
      bool artifacts = fs::exists(wd + "/mask_out.png");
      report(10, pass && csv_ok && artifacts, t0,
             !pass ? std::string("a CLI step failed")
                   : (csv_ok && artifacts
                          ? std::string("five subcommands exited 0, csv columns present")
                          : std::string("csv or output artifacts malformed")));
    } catch (const std::exception& e) {
      report(10, false, t0, e.what());
    }
  }

  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}

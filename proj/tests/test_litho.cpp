#include <fstream>
#include <random>

#include "doctest.h"

#include "helpers.hpp"
#include "ililt/litho.hpp"

using namespace ililt;
using testutil::TempDir;
using testutil::cplx;

namespace {

KernelSet impulse_kernel(double px = 8.0) {
  KernelSet ks;
  ks.count = 1;
  ks.size = 3;
  ks.pixel_size = px;
  ks.kernels = {{std::vector<cplx>(9, cplx(0, 0))}};
  ks.kernels[0][4] = cplx(1, 0);
  ks.alpha = {1.0};
  ks.intensity_bound = 1.0;
  return ks;
}

}  // namespace

TEST_SUITE("litho") {

TEST_CASE("simulate_intensity matches the O(n^4) spatial convolution") {
  std::mt19937_64 rng(31);
  KernelSet ks = synth_kernels(5, 2, 7, 40.0, 8.0);
  for (int trial = 0; trial < 3; ++trial) {
    GrayImage mask = testutil::random_gray(rng, 16, 16);
    GrayImage fast = simulate_intensity(mask, ks);
    GrayImage slow = testutil::naive_intensity(mask, ks);
    for (size_t i = 0; i < fast.size(); ++i)
      CHECK(std::abs(fast.data[i] - slow.data[i]) < 1e-9);
  }
}

TEST_CASE("impulse kernel gives intensity = mask squared") {
  std::mt19937_64 rng(32);
  GrayImage mask = testutil::random_gray(rng, 16, 16);
  GrayImage out = simulate_intensity(mask, impulse_kernel());
  for (size_t i = 0; i < mask.size(); ++i)
    CHECK(out.data[i] == doctest::Approx(mask.data[i] * mask.data[i]).epsilon(1e-12));
}

TEST_CASE("intensity is non-negative and shift-equivariant") {
  std::mt19937_64 rng(33);
  KernelSet ks = synth_kernels(6, 3, 5, 30.0, 8.0);
  GrayImage mask = testutil::random_gray(rng, 16, 16);
  GrayImage base = simulate_intensity(mask, ks);
  for (double v : base.data) CHECK(v >= 0.0);

  const int dy = 3, dx = 5;
  GrayImage shifted = mask;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) shifted.at((y + dy) % 16, (x + dx) % 16) = mask.at(y, x);
  GrayImage out = simulate_intensity(shifted, ks);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      CHECK(out.at((y + dy) % 16, (x + dx) % 16) ==
            doctest::Approx(base.at(y, x)).epsilon(1e-9));
}

TEST_CASE("flat-mask calibration hits intensity 1") {
  KernelSet ks = synth_kernels(7, 4, 15, 60.0, 8.0);
  GrayImage ones = GrayImage::filled(64, 64, 8.0, 1.0);
  GrayImage out = simulate_intensity(ones, ks);
  double peak = 0.0;
  for (double v : out.data) peak = std::max(peak, v);
  CHECK(peak == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(out.data[0] <= ks.intensity_bound + 1e-9);
}

TEST_CASE("synth_kernels is deterministic and f32-exact") {
  KernelSet a = synth_kernels(9, 3, 9, 50.0, 8.0);
  KernelSet b = synth_kernels(9, 3, 9, 50.0, 8.0);
  CHECK(a.alpha == b.alpha);
  for (int k = 0; k < a.count; ++k) CHECK(a.kernels[k] == b.kernels[k]);
  for (int k = 0; k < a.count; ++k)
    for (const auto& c : a.kernels[k]) {
      CHECK(static_cast<double>(static_cast<float>(c.real())) == c.real());
      CHECK(static_cast<double>(static_cast<float>(c.imag())) == c.imag());
    }
}

TEST_CASE("kernel file round trip is bit exact") {
  TempDir td("litho_kern");
  KernelSet ks = synth_kernels(10, 3, 7, 45.0, 4.0);
  ks.label = "corner_a";
  save_kernels(ks, td.file("k.bin"));
  KernelSet back = load_kernels(td.file("k.bin"));
  CHECK(back.count == ks.count);
  CHECK(back.size == ks.size);
  CHECK(back.alpha == ks.alpha);
  for (int k = 0; k < ks.count; ++k) CHECK(back.kernels[k] == ks.kernels[k]);
  CHECK(back.label == "corner_a");
  CHECK(back.pixel_size == 4.0);
}

TEST_CASE("kernel loader rejects malformed files") {
  TempDir td("litho_badkern");
  KernelSet ks = synth_kernels(11, 2, 5, 30.0, 8.0);
  save_kernels(ks, td.file("k.bin"));

  SUBCASE("bad magic") {
    auto bytes = [&] {
      std::ifstream f(td.file("k.bin"), std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(f), {});
    }();
    bytes[0] = 'X';
    std::ofstream(td.file("bad.bin"), std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_kernels(td.file("bad.bin")),
                         doctest::Contains("bad magic"), std::runtime_error);
  }
  SUBCASE("truncated") {
    auto bytes = [&] {
      std::ifstream f(td.file("k.bin"), std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(f), {});
    }();
    bytes.resize(bytes.size() - 7);
    std::ofstream(td.file("trunc.bin"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_kernels(td.file("trunc.bin")), std::runtime_error);
  }
  SUBCASE("negative weight") {
    KernelSet bad = ks;
    bad.alpha[0] = -1.0;
    CHECK_THROWS_WITH_AS(save_kernels(bad, td.file("neg.bin")),
                         doctest::Contains("non-positive"), std::invalid_argument);
  }
}

TEST_CASE("validate_kernel_set invariants") {
  KernelSet ks = synth_kernels(12, 2, 5, 30.0, 8.0);
  CHECK_NOTHROW(validate_kernel_set(ks));
  SUBCASE("even size") {
    ks.size = 4;
    CHECK_THROWS_AS(validate_kernel_set(ks), std::invalid_argument);
  }
  SUBCASE("unsorted weights") {
    ks.alpha = {ks.alpha[1] * 0.5, ks.alpha[1]};
    CHECK_THROWS_AS(validate_kernel_set(ks), std::invalid_argument);
  }
  SUBCASE("non-finite entry") {
    ks.kernels[0][0] = cplx(std::nan(""), 0);
    CHECK_THROWS_AS(validate_kernel_set(ks), std::invalid_argument);
  }
}

TEST_CASE("resist threshold is strict and dose-monotone") {
  GrayImage in = GrayImage::zeros(3, 1, 1.0);
  ProcessCondition pc;  // i_th = 0.225, dose 1
  in.data = {0.225, 0.2250001, 0.224};
  BinaryImage z = resist_threshold(in, pc);
  CHECK(z.data[0] == 0);  // exactly at threshold does not print
  CHECK(z.data[1] == 1);
  CHECK(z.data[2] == 0);

  std::mt19937_64 rng(34);
  GrayImage r = testutil::random_gray(rng, 16, 16);
  ProcessCondition lo = pc, hi = pc;
  lo.i_th = 0.1;
  hi.i_th = 0.4;
  BinaryImage zlo = resist_threshold(r, lo), zhi = resist_threshold(r, hi);
  for (size_t i = 0; i < r.size(); ++i) CHECK(zlo.data[i] >= zhi.data[i]);
}

TEST_CASE("sigmoid relaxations") {
  RelaxConfig rc;  // beta_m 4, beta_z 50
  GrayImage m = GrayImage::zeros(3, 1, 1.0);
  m.data = {0.5, 1.0, 0.0};
  GrayImage s = sigmoid_mask(m, rc);
  CHECK(s.data[0] == doctest::Approx(0.5));
  CHECK(s.data[1] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  CHECK(s.data[2] == doctest::Approx(1.0 / (1.0 + std::exp(2.0))));

  ProcessCondition pc;
  GrayImage i = GrayImage::zeros(2, 1, 1.0);
  i.data = {pc.i_th, pc.i_th + 0.1};
  GrayImage z = sigmoid_resist(i, pc, rc);
  CHECK(z.data[0] == doctest::Approx(0.5));
  CHECK(z.data[1] == doctest::Approx(1.0 / (1.0 + std::exp(-50.0 * 0.1))));

  // large beta_z approaches the hard threshold away from it
  RelaxConfig steep{4.0, 1e4};
  GrayImage far = GrayImage::zeros(2, 1, 1.0);
  far.data = {pc.i_th - 0.002, pc.i_th + 0.002};
  GrayImage zs = sigmoid_resist(far, pc, steep);
  BinaryImage zh = resist_threshold(far, pc);
  CHECK(std::abs(zs.data[0] - zh.data[0]) < 0.01);
  CHECK(std::abs(zs.data[1] - zh.data[1]) < 0.01);
}

TEST_CASE("intensity_gradient matches finite differences") {
  std::mt19937_64 rng(35);
  KernelSet ks = synth_kernels(13, 3, 5, 30.0, 8.0);
  GrayImage mask = testutil::random_gray(rng, 16, 16);
  std::vector<double> upstream(mask.size());
  for (double& v : upstream) v = u01(rng) * 2.0 - 1.0;

  LithoSimulator sim(ks, 16, 16);
  std::vector<double> g = sim.intensity_gradient(mask, upstream);

  const double eps = 1e-5;
  for (int probe = 0; probe < 20; ++probe) {
    size_t i = static_cast<size_t>(uint_below(rng, static_cast<int>(mask.size())));
    GrayImage mp = mask, mm = mask;
    mp.data[i] += eps;
    mm.data[i] -= eps;
    // directional loss l = sum(upstream .* I)
    double lp = 0.0, lm = 0.0;
    GrayImage ip = sim.simulate_intensity(mp), im = sim.simulate_intensity(mm);
    for (size_t j = 0; j < upstream.size(); ++j) {
      lp += upstream[j] * ip.data[j];
      lm += upstream[j] * im.data[j];
    }
    double fd = (lp - lm) / (2 * eps);
    CHECK(std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-2}) < 1e-6);
  }
}

TEST_CASE("cached-field gradient equals the recomputed one") {
  std::mt19937_64 rng(36);
  KernelSet ks = synth_kernels(14, 2, 5, 30.0, 8.0);
  LithoSimulator sim(ks, 16, 16);
  GrayImage mask = testutil::random_gray(rng, 16, 16);
  std::vector<double> upstream(mask.size());
  for (double& v : upstream) v = u01(rng) - 0.5;

  auto fwd = sim.simulate_with_fields(mask);
  for (size_t i = 0; i < mask.size(); ++i)
    CHECK(fwd.intensity.data[i] ==
          doctest::Approx(sim.simulate_intensity(mask).data[i]).epsilon(1e-12));
  CHECK(sim.intensity_gradient(fwd, upstream) == sim.intensity_gradient(mask, upstream));
}

TEST_CASE("upstream of zero gives zero gradient") {
  KernelSet ks = synth_kernels(15, 2, 5, 30.0, 8.0);
  GrayImage mask = GrayImage::filled(16, 16, 8.0, 0.5);
  std::vector<double> zero(mask.size(), 0.0);
  for (double v : intensity_gradient(mask, zero, ks)) CHECK(v == 0.0);
}

TEST_CASE("simulator rejects bad dimensions") {
  KernelSet ks = synth_kernels(16, 2, 5, 30.0, 8.0);
  CHECK_THROWS_AS(LithoSimulator(ks, 12, 16), std::invalid_argument);  // non pow2
  CHECK_THROWS_AS(LithoSimulator(ks, 4, 4), std::invalid_argument);    // smaller than kernel
  LithoSimulator sim(ks, 16, 16);
  GrayImage wrong = GrayImage::zeros(8, 8, 8.0);
  CHECK_THROWS_AS(sim.simulate_intensity(wrong), std::invalid_argument);
}

}  // TEST_SUITE

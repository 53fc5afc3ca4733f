#include <random>

#include "doctest.h"

#include "helpers.hpp"
#include "ililt/fft.hpp"

using namespace ililt;
using testutil::naive_dft;
using testutil::naive_dft2;

TEST_SUITE("fft") {

TEST_CASE("1d transform matches the direct dft") {
  std::mt19937_64 rng(11);
  for (int n : {2, 8, 16, 64}) {
    std::vector<cplx> a(n);
    for (auto& c : a) c = cplx(u01(rng) - 0.5, u01(rng) - 0.5);
    std::vector<cplx> got = a;
    plan_for(n).run(got.data(), false);
    std::vector<cplx> want = naive_dft(a, false);
    for (int i = 0; i < n; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-10);

    got = a;
    plan_for(n).run(got.data(), true);
    want = naive_dft(a, true);
    for (int i = 0; i < n; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-10);
  }
}

TEST_CASE("2d transform matches the direct dft") {
  std::mt19937_64 rng(12);
  const int h = 8, w = 16;
  std::vector<cplx> a(static_cast<size_t>(h) * w);
  for (auto& c : a) c = cplx(u01(rng) - 0.5, u01(rng) - 0.5);
  std::vector<cplx> got = a;
  fft2(got.data(), h, w, false);
  std::vector<cplx> want = naive_dft2(a, h, w, false);
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-9);
}

TEST_CASE("inverse undoes forward") {
  std::mt19937_64 rng(13);
  const int h = 32, w = 32;
  std::vector<cplx> a(static_cast<size_t>(h) * w);
  for (auto& c : a) c = cplx(u01(rng), u01(rng));
  std::vector<cplx> b = a;
  fft2(b.data(), h, w, false);
  fft2(b.data(), h, w, true);
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("parseval") {
  std::mt19937_64 rng(14);
  const int n = 64;
  std::vector<cplx> a(n);
  for (auto& c : a) c = cplx(u01(rng) - 0.5, u01(rng) - 0.5);
  double time_e = 0.0;
  for (const auto& c : a) time_e += std::norm(c);
  plan_for(n).run(a.data(), false);
  double freq_e = 0.0;
  for (const auto& c : a) freq_e += std::norm(c);
  CHECK(std::abs(freq_e / n - time_e) < 1e-10);
}

TEST_CASE("non power of two rejected") {
  CHECK_THROWS_AS(plan_for(12), std::invalid_argument);
  CHECK_THROWS_AS(plan_for(0), std::invalid_argument);
}

}  // TEST_SUITE

// Finite-difference validation of every tape primitive plus a layered
// composite. Shared by the unit tests and the `gradcheck` CLI subcommand.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ililt {

struct GradCheckEntry {
  std::string primitive;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Runs the whole suite. Central differences (eps = 1e-5) against the tape's
// analytic VJP at 10 random coordinates per input, rel err threshold 1e-5.
std::vector<GradCheckEntry> gradcheck_suite(uint64_t seed);

bool gradcheck_all_pass(const std::vector<GradCheckEntry>& entries);

}  // namespace ililt

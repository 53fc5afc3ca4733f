// Printability scoring: EPE violation counting at the nominal condition and
// process-variation band area across dose corners.
#pragma once

#include <vector>

#include "ililt/litho.hpp"
#include "ililt/raster.hpp"

namespace ililt {

struct EpeConfig {
  double sample_interval = 40.0;  // nm
  double tolerance = 16.0;        // nm
  double search_window = 80.0;    // nm
};

struct EpeSite {
  double x = 0.0, y = 0.0;    // sample position, nm
  double measured_epe = 0.0;  // nm; meaningful only when contour_found
  bool contour_found = false;
  bool violating = false;
};

struct EpeReport {
  int violations = 0;
  std::vector<EpeSite> sites;
};

// Samples every design edge from its midpoint outward at sample_interval
// and scans along the edge normal (both ways, up to search_window) for the
// nearest wafer transition whose orientation matches the design edge.
// A site violates when the distance exceeds tolerance or no matching
// transition exists in the window.
EpeReport epe_violations(const BinaryImage& wafer, const BinaryImage& design,
                         const EpeConfig& cfg);

// One intensity simulation, thresholded at the three corners; band area is
// (printed at outer) minus (printed at inner) in nm^2. Requires
// outer dose >= nominal dose >= inner dose and verifies pixelwise
// containment inner <= nominal <= outer.
double pvb_area(const BinaryImage& mask, const KernelSet& ks, const ProcessCondition& nominal,
                const ProcessCondition& inner, const ProcessCondition& outer);

// Squared Frobenius distance, the same convention as the ILT loss.
double l2_error(const GrayImage& a, const GrayImage& b);

}  // namespace ililt

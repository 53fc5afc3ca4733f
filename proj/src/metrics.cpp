#include "ililt/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace ililt {
namespace {

void check_epe_config(const EpeConfig& cfg) {
  if (cfg.sample_interval <= 0.0 || cfg.tolerance <= 0.0 || cfg.search_window <= 0.0)
    throw std::invalid_argument("epe: config values must be positive");
  if (cfg.search_window < cfg.tolerance)
    throw std::invalid_argument("epe: search_window must cover the tolerance");
}

// Sample offsets from the segment midpoint outward; positions live in
// [start, end) so a corner sample never lands on a row/column outside the
// feature. Short segments get exactly the midpoint.
std::vector<double> sample_positions(double start, double end, double interval) {
  std::vector<double> pos;
  double mid = 0.5 * (start + end);
  pos.push_back(mid);
  for (int k = 1;; ++k) {
    double lo = mid - k * interval;
    double hi = mid + k * interval;
    bool any = false;
    if (lo >= start) {
      pos.push_back(lo);
      any = true;
    }
    if (hi < end) {
      pos.push_back(hi);
      any = true;
    }
    if (!any) break;
  }
  return pos;
}

}  // namespace

EpeReport epe_violations(const BinaryImage& wafer, const BinaryImage& design,
                         const EpeConfig& cfg) {
  check_epe_config(cfg);
  if (wafer.width != design.width || wafer.height != design.height)
    throw std::invalid_argument("epe: dimension mismatch");
  if (wafer.pixel_size != design.pixel_size)
    throw std::invalid_argument("epe: pixel_size mismatch");

  const double px = design.pixel_size;
  const int w = design.width, h = design.height;
  const int max_steps = static_cast<int>(std::floor(cfg.search_window / px));

  auto wafer_at = [&](int y, int x) -> int {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return wafer.at(y, x) ? 1 : 0;
  };

  EpeReport report;
  for (const EdgeSegment& seg : extract_edges(design)) {
    for (double pos : sample_positions(seg.span_start, seg.span_end, cfg.sample_interval)) {
      EpeSite site;
      int along = static_cast<int>(std::floor(pos / px));  // row (vertical) or column
      if (seg.axis == EdgeAxis::Vertical) {
        site.x = seg.fixed_coord;
        site.y = pos;
        int c0 = static_cast<int>(std::lround(seg.fixed_coord / px));
        for (int k = 0; k <= max_steps && !site.contour_found; ++k) {
          for (int sign : {-1, +1}) {
            if (k == 0 && sign > 0) break;
            int c = c0 + sign * k;
            if (c < 0 || c > w) continue;
            int left = wafer_at(along, c - 1);
            int right = wafer_at(along, c);
            bool match = seg.inside_direction > 0 ? (left == 0 && right == 1)
                                                  : (left == 1 && right == 0);
            if (match) {
              site.contour_found = true;
              site.measured_epe = k * px;
              break;
            }
          }
        }
      } else {
        site.x = pos;
        site.y = seg.fixed_coord;
        int r0 = static_cast<int>(std::lround(seg.fixed_coord / px));
        for (int k = 0; k <= max_steps && !site.contour_found; ++k) {
          for (int sign : {-1, +1}) {
            if (k == 0 && sign > 0) break;
            int r = r0 + sign * k;
            if (r < 0 || r > h) continue;
            int above = wafer_at(r - 1, along);
            int below = wafer_at(r, along);
            bool match = seg.inside_direction > 0 ? (above == 0 && below == 1)
                                                  : (above == 1 && below == 0);
            if (match) {
              site.contour_found = true;
              site.measured_epe = k * px;
              break;
            }
          }
        }
      }
      site.violating = !site.contour_found || site.measured_epe > cfg.tolerance;
      if (site.violating) report.violations += 1;
      report.sites.push_back(site);
    }
  }
  return report;
}

double pvb_area(const BinaryImage& mask, const KernelSet& ks, const ProcessCondition& nominal,
                const ProcessCondition& inner, const ProcessCondition& outer) {
  if (!(outer.dose_scale >= nominal.dose_scale && nominal.dose_scale >= inner.dose_scale))
    throw std::invalid_argument("pvb: corner dose ordering violated");
  GrayImage intensity = simulate_intensity(to_gray(mask), ks);
  BinaryImage zi = resist_threshold(intensity, inner);
  BinaryImage zn = resist_threshold(intensity, nominal);
  BinaryImage zo = resist_threshold(intensity, outer);
  int64_t band = 0;
  for (size_t i = 0; i < zi.data.size(); ++i) {
    if ((zi.data[i] && !zn.data[i]) || (zn.data[i] && !zo.data[i]))
      throw std::logic_error("pvb: corner containment violated");
    if (zo.data[i] && !zi.data[i]) band += 1;
  }
  return static_cast<double>(band) * mask.pixel_size * mask.pixel_size;
}

double l2_error(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("l2_error: dimension mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace ililt

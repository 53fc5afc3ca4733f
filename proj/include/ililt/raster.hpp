// Pixel image containers, PNG I/O, resampling and edge extraction.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ililt {

// Real-valued raster in [0,1] (masks, relaxed wafers, intensities after
// calibration). Row-major, square pixels of pixel_size nanometers.
struct GrayImage {
  int width = 0;
  int height = 0;
  double pixel_size = 1.0;  // nm per pixel
  std::vector<double> data;

  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }

  static GrayImage filled(int w, int h, double px, double value);
  static GrayImage zeros(int w, int h, double px) { return filled(w, h, px, 0.0); }
};

// 0/1 raster (designs, thresholded wafers, binarized masks).
struct BinaryImage {
  int width = 0;
  int height = 0;
  double pixel_size = 1.0;
  std::vector<uint8_t> data;

  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }

  static BinaryImage zeros(int w, int h, double px);
};

GrayImage to_gray(const BinaryImage& b);

// Throws if dimensions are non-positive or any value is outside [0,1].
void validate_unit_range(const GrayImage& img);

// One maximal axis-aligned piece of a rectilinear 0/1 boundary.
// Vertical segments lie on the line x = fixed_coord and span in y,
// horizontal segments lie on y = fixed_coord and span in x. All
// coordinates in nm; pixel (row i, col j) covers [j*px,(j+1)*px) x
// [i*px,(i+1)*px). inside_direction is +1/-1 along the segment normal
// (x for vertical, y for horizontal) pointing at pixels of value 1.
enum class EdgeAxis { Horizontal, Vertical };

struct EdgeSegment {
  EdgeAxis axis;
  double fixed_coord = 0.0;
  double span_start = 0.0;
  double span_end = 0.0;
  int inside_direction = +1;

  double length() const { return span_end - span_start; }
};

// 8-bit grayscale PNG only; anything else is rejected. pixel_size is not
// stored in the PNG, callers pass it (dataset manifests carry it).
GrayImage load_png(const std::string& path, double pixel_size = 1.0);
void save_png(const GrayImage& img, const std::string& path);

BinaryImage binarize(const GrayImage& img, double thresh);

// Block mean; factor must divide both dimensions. pixel_size scales up.
GrayImage avg_pool(const GrayImage& img, int factor);

// Keys bicubic (a = -0.5), edge-clamped, output clamped to [0,1].
GrayImage upsample_bicubic(const GrayImage& img, int factor);

// Decompose the 0/1 boundary of a rectilinear design into maximal
// segments. Pixels outside the image count as 0.
std::vector<EdgeSegment> extract_edges(const BinaryImage& design);

}  // namespace ililt

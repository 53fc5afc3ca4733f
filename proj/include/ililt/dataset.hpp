// Synthetic rectilinear tiles, golden-mask dataset construction via the
// numerical ILT solver, and manifest-based persistence.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ililt/ilt.hpp"
#include "ililt/litho.hpp"
#include "ililt/raster.hpp"

namespace ililt {

struct RectNm {
  double x = 0.0, y = 0.0;  // lower corner, nm
  double w = 0.0, h = 0.0;
};

// Sampling bounds handed to gen_tile. All geometry snaps to pixel
// boundaries so rasterization is exact.
struct TileBounds {
  int side = 256;            // pixels
  double pixel_size = 8.0;   // nm
  double margin = 200.0;     // pattern-free border, nm
  int min_rects = 4;
  int max_rects = 12;
  double min_width = 64.0;   // nm, per-rectangle minimum dimension
  double max_width = 400.0;  // nm, per-rectangle maximum dimension
  double min_space = 80.0;   // nm, pairwise clearance
  int attempt_cap = 200;     // placement attempts per rectangle
};

struct TileSpec {
  int side = 0;
  double pixel_size = 0.0;
  double margin = 0.0;
  double min_width = 0.0;
  double min_space = 0.0;
  std::vector<RectNm> rects;
};

struct TileGenError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenTile {
  TileSpec spec;
  BinaryImage design;
};

// Deterministic in seed. Throws TileGenError when the attempt cap is hit;
// never returns a rule-violating tile.
GenTile gen_tile(uint64_t seed, const TileBounds& bounds);

struct DatasetEntry {
  std::string design_file;
  std::string mask_file;
  uint64_t seed = 0;
  int epe_violations = 0;  // of the golden mask's nominal print
  bool epe_clean = true;
};

struct DatasetManifest {
  int version = 1;
  double pixel_size_nm = 8.0;
  int tile_side = 256;
  std::string kernel_file;
  uint32_t kernel_crc32 = 0;
  IltConfig ilt;
  TileBounds bounds;
  std::vector<DatasetEntry> entries;
};

// Generates n tiles, runs the ILT solver per tile, writes design/mask PNG
// pairs plus manifest.json under out_dir. Tiles whose solver run diverges
// (or whose geometry cannot be placed) are regenerated from the next seed
// in the stream; golden masks with residual EPE violations are kept and
// flagged. kernel_file is recorded with its crc32 so loads can verify it.
DatasetManifest build_dataset(int n, uint64_t seed, const KernelSet& ks,
                              const std::string& kernel_file, const IltConfig& ilt_cfg,
                              const TileBounds& bounds, const std::string& out_dir);

struct Sample {
  BinaryImage design;
  BinaryImage golden;
  uint64_t seed = 0;
  std::string id;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

// Reads manifest.json from dir, verifies the kernel hash and loads every
// referenced pair.
Dataset load_dataset(const std::string& dir);

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

uint32_t crc32_file(const std::string& path);

}  // namespace ililt

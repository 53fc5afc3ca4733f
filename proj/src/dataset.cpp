#include "ililt/dataset.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "ililt/metrics.hpp"
#include "ililt/rng.hpp"

namespace fs = std::filesystem;

namespace ililt {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string index_name(const char* prefix, int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.png", prefix, idx);
  return buf;
}

nlohmann::json ilt_to_json(const IltConfig& c) {
  return {{"max_iters", c.max_iters},
          {"step_size", c.step_size},
          {"stop_rel_tol", c.stop_rel_tol},
          {"keep_best", c.keep_best},
          {"snapshot_interval", c.snapshot_interval},
          {"beta_m", c.relax.beta_m},
          {"beta_z", c.relax.beta_z},
          {"i_th", c.nominal.i_th},
          {"dose_scale", c.nominal.dose_scale}};
}

IltConfig ilt_from_json(const nlohmann::json& j) {
  IltConfig c;
  c.max_iters = j.value("max_iters", c.max_iters);
  c.step_size = j.value("step_size", c.step_size);
  c.stop_rel_tol = j.value("stop_rel_tol", c.stop_rel_tol);
  c.keep_best = j.value("keep_best", c.keep_best);
  c.snapshot_interval = j.value("snapshot_interval", c.snapshot_interval);
  c.relax.beta_m = j.value("beta_m", c.relax.beta_m);
  c.relax.beta_z = j.value("beta_z", c.relax.beta_z);
  c.nominal.i_th = j.value("i_th", c.nominal.i_th);
  c.nominal.dose_scale = j.value("dose_scale", c.nominal.dose_scale);
  return c;
}

nlohmann::json bounds_to_json(const TileBounds& b) {
  return {{"side", b.side},
          {"pixel_size", b.pixel_size},
          {"margin", b.margin},
          {"min_rects", b.min_rects},
          {"max_rects", b.max_rects},
          {"min_width", b.min_width},
          {"max_width", b.max_width},
          {"min_space", b.min_space},
          {"attempt_cap", b.attempt_cap}};
}

TileBounds bounds_from_json(const nlohmann::json& j) {
  TileBounds b;
  b.side = j.value("side", b.side);
  b.pixel_size = j.value("pixel_size", b.pixel_size);
  b.margin = j.value("margin", b.margin);
  b.min_rects = j.value("min_rects", b.min_rects);
  b.max_rects = j.value("max_rects", b.max_rects);
  b.min_width = j.value("min_width", b.min_width);
  b.max_width = j.value("max_width", b.max_width);
  b.min_space = j.value("min_space", b.min_space);
  b.attempt_cap = j.value("attempt_cap", b.attempt_cap);
  return b;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + tmp);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

}  // namespace

GenTile gen_tile(uint64_t seed, const TileBounds& b) {
  if (b.min_rects < 1 || b.max_rects < b.min_rects)
    throw std::invalid_argument("gen_tile: rectangle count bounds must allow at least one");
  if (b.side < 2 || b.pixel_size <= 0.0 || b.margin < 0.0 || b.min_width <= 0.0 ||
      b.max_width < b.min_width || b.min_space < 0.0 || b.attempt_cap < 1)
    throw std::invalid_argument("gen_tile: malformed bounds");

  const double px = b.pixel_size;
  const int margin_px = static_cast<int>(std::ceil(b.margin / px - 1e-9));
  const int avail = b.side - 2 * margin_px;
  const int min_wpx = std::max(1, static_cast<int>(std::ceil(b.min_width / px - 1e-9)));
  const int max_wpx = std::min(avail, static_cast<int>(std::floor(b.max_width / px + 1e-9)));
  if (avail < min_wpx || max_wpx < min_wpx)
    throw TileGenError("gen_tile: bounds leave no room for a rectangle");

  std::mt19937_64 rng(seed);
  const int n_rects = b.min_rects + uint_below(rng, b.max_rects - b.min_rects + 1);

  struct RectPx {
    int x = 0, y = 0, w = 0, h = 0;
  };
  std::vector<RectPx> placed;
  placed.reserve(n_rects);
  for (int k = 0; k < n_rects; ++k) {
    RectPx r;
    bool ok = false;
    for (int attempt = 0; attempt < b.attempt_cap && !ok; ++attempt) {
      r.w = min_wpx + uint_below(rng, max_wpx - min_wpx + 1);
      r.h = min_wpx + uint_below(rng, max_wpx - min_wpx + 1);
      r.x = margin_px + uint_below(rng, avail - r.w + 1);
      r.y = margin_px + uint_below(rng, avail - r.h + 1);
      ok = true;
      for (const RectPx& o : placed) {
        double gx = std::max({0, o.x - (r.x + r.w), r.x - (o.x + o.w)}) * px;
        double gy = std::max({0, o.y - (r.y + r.h), r.y - (o.y + o.h)}) * px;
        if (std::hypot(gx, gy) < b.min_space) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) throw TileGenError("gen_tile: attempt cap exceeded placing rectangle");
    placed.push_back(r);
  }

  GenTile out;
  out.spec.side = b.side;
  out.spec.pixel_size = px;
  out.spec.margin = b.margin;
  out.spec.min_width = b.min_width;
  out.spec.min_space = b.min_space;
  out.design = BinaryImage::zeros(b.side, b.side, px);
  for (const RectPx& r : placed) {
    out.spec.rects.push_back(RectNm{r.x * px, r.y * px, r.w * px, r.h * px});
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) out.design.at(y, x) = 1;
  }
  return out;
}

uint32_t crc32_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for hash: " + path);
  uLong crc = ::crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    std::streamsize got = f.gcount();
    if (got > 0) crc = ::crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(got));
  }
  return static_cast<uint32_t>(crc);
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["version"] = m.version;
  j["pixel_size_nm"] = m.pixel_size_nm;
  j["tile_side"] = m.tile_side;
  j["kernels"] = {{"file", m.kernel_file}, {"crc32", m.kernel_crc32}};
  j["ilt"] = ilt_to_json(m.ilt);
  j["bounds"] = bounds_to_json(m.bounds);
  nlohmann::json tiles = nlohmann::json::array();
  for (const DatasetEntry& e : m.entries)
    tiles.push_back({{"design", e.design_file},
                     {"mask", e.mask_file},
                     {"seed", e.seed},
                     {"epe_violations", e.epe_violations},
                     {"epe_clean", e.epe_clean}});
  j["tiles"] = std::move(tiles);
  write_text_atomic(path, j.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest parse error: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != 1) throw std::runtime_error("manifest: unsupported version");
  m.pixel_size_nm = j.at("pixel_size_nm").get<double>();
  m.tile_side = j.at("tile_side").get<int>();
  m.kernel_file = j.at("kernels").at("file").get<std::string>();
  m.kernel_crc32 = j.at("kernels").at("crc32").get<uint32_t>();
  m.ilt = ilt_from_json(j.at("ilt"));
  m.bounds = bounds_from_json(j.at("bounds"));
  for (const auto& t : j.at("tiles")) {
    DatasetEntry e;
    e.design_file = t.at("design").get<std::string>();
    e.mask_file = t.at("mask").get<std::string>();
    e.seed = t.at("seed").get<uint64_t>();
    e.epe_violations = t.at("epe_violations").get<int>();
    e.epe_clean = t.at("epe_clean").get<bool>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest build_dataset(int n, uint64_t seed, const KernelSet& ks,
                              const std::string& kernel_file, const IltConfig& ilt_cfg,
                              const TileBounds& bounds, const std::string& out_dir) {
  if (n < 1) throw std::invalid_argument("build_dataset: tile count must be positive");
  validate_kernel_set(ks);
  if (std::abs(bounds.pixel_size - ks.pixel_size) > 1e-9)
    throw std::invalid_argument("build_dataset: tile pixel size does not match kernel grid");
  const double radius_nm = (ks.size / 2) * ks.pixel_size;
  if (bounds.margin + 1e-9 < radius_nm)
    throw std::invalid_argument("build_dataset: margin smaller than kernel radius");

  fs::create_directories(out_dir);
  LithoSimulator sim(ks, bounds.side, bounds.side);

  DatasetManifest m;
  m.pixel_size_nm = bounds.pixel_size;
  m.tile_side = bounds.side;
  m.kernel_file = kernel_file;
  m.kernel_crc32 = kernel_file.empty() ? 0u : crc32_file(kernel_file);
  m.ilt = ilt_cfg;
  m.bounds = bounds;

  uint64_t stream = 0;
  for (int i = 0; i < n; ++i) {
    const int regen_cap = 64;
    bool done = false;
    for (int tries = 0; tries < regen_cap && !done; ++tries) {
      const uint64_t tile_seed = splitmix64(seed + stream++);
      try {
        GenTile gt = gen_tile(tile_seed, bounds);
        IltResult res = ilt_optimize(gt.design, ks, ilt_cfg);
        GrayImage intensity = sim.simulate_intensity(to_gray(res.mask));
        BinaryImage wafer = resist_threshold(intensity, ilt_cfg.nominal);
        EpeReport rep = epe_violations(wafer, gt.design, EpeConfig{});

        DatasetEntry e;
        e.design_file = index_name("design", i);
        e.mask_file = index_name("mask", i);
        e.seed = tile_seed;
        e.epe_violations = rep.violations;
        e.epe_clean = rep.violations == 0;
        save_png(to_gray(gt.design), out_dir + "/" + e.design_file);
        save_png(to_gray(res.mask), out_dir + "/" + e.mask_file);
        m.entries.push_back(std::move(e));
        done = true;
      } catch (const TileGenError& e) {
        std::fprintf(stderr, "note: tile %d regenerated (%s)\n", i, e.what());
      } catch (const IltDivergence& e) {
        std::fprintf(stderr, "note: tile %d regenerated (%s)\n", i, e.what());
      }
    }
    if (!done)
      throw std::runtime_error("build_dataset: could not produce a valid tile after retries");
  }

  save_manifest(m, out_dir + "/manifest.json");
  return m;
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.manifest = load_manifest(dir + "/manifest.json");
  const DatasetManifest& m = ds.manifest;

  if (!m.kernel_file.empty()) {
    std::string kpath = m.kernel_file;
    if (!fs::exists(kpath)) kpath = dir + "/" + m.kernel_file;
    if (!fs::exists(kpath))
      throw std::runtime_error("dataset kernel file missing: " + m.kernel_file);
    if (crc32_file(kpath) != m.kernel_crc32)
      throw std::runtime_error("dataset kernel file hash mismatch: " + kpath);
  }

  char idbuf[16];
  for (size_t i = 0; i < m.entries.size(); ++i) {
    const DatasetEntry& e = m.entries[i];
    Sample s;
    GrayImage d = load_png(dir + "/" + e.design_file, m.pixel_size_nm);
    GrayImage g = load_png(dir + "/" + e.mask_file, m.pixel_size_nm);
    if (d.height != m.tile_side || d.width != m.tile_side || g.height != m.tile_side ||
        g.width != m.tile_side)
      throw std::runtime_error("dataset tile size does not match manifest: " + e.design_file);
    s.design = binarize(d, 0.5);
    s.golden = binarize(g, 0.5);
    s.seed = e.seed;
    std::snprintf(idbuf, sizeof(idbuf), "%04zu", i);
    s.id = idbuf;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ililt

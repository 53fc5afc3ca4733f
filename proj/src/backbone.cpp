#include "ililt/backbone.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "ililt/fft.hpp"
#include "ililt/rng.hpp"

namespace ililt {
namespace {

void check_config(const BackboneConfig& cfg) {
  if (cfg.patch_size < 2 || !is_pow2(cfg.patch_size))
    throw std::invalid_argument("backbone: patch_size must be a power of two >= 2");
  if (cfg.k_max < 1 || 2 * cfg.k_max > cfg.patch_size)
    throw std::invalid_argument("backbone: k_max must satisfy 1 <= k_max <= patch_size/2");
  if (cfg.hidden < 1) throw std::invalid_argument("backbone: hidden channels must be >= 1");
}

constexpr char kMagic[8] = {'I', 'L', 'I', 'L', 'T', '0', '0', '1'};

}  // namespace

UpdateOperator::UpdateOperator(const BackboneConfig& cfg, uint64_t seed) : cfg_(cfg) {
  check_config(cfg);
  const int c = cfg.hidden;
  const int m2 = 2 * cfg.k_max;
  std::mt19937_64 rng(seed);

  Tensor spec_w = Tensor::zeros({c, 3, m2, m2}, true);
  double s_spec = 0.5 / std::sqrt(3.0);
  for (double& v : spec_w.data) v = normal(rng) * s_spec;

  Tensor token_w = Tensor::zeros({c, c, 3, 3});
  double s_tok = std::sqrt(2.0 / (9.0 * c));
  for (double& v : token_w.data) v = normal(rng) * s_tok;

  Tensor head_w = Tensor::zeros({1, c, 1, 1});
  double s_head = 1.0 / std::sqrt(static_cast<double>(c));
  for (double& v : head_w.data) v = normal(rng) * s_head;

  params_.reserve(5);
  params_.emplace_back("spec_w", std::move(spec_w));
  params_.emplace_back("token_w", std::move(token_w));
  params_.emplace_back("token_b", Tensor::zeros({c}));
  params_.emplace_back("head_w", std::move(head_w));
  params_.emplace_back("head_b", Tensor::zeros({1}));
}

std::vector<Parameter*> UpdateOperator::parameters() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> UpdateOperator::parameters() const {
  std::vector<const Parameter*> out;
  for (const Parameter& p : params_) out.push_back(&p);
  return out;
}

int64_t UpdateOperator::count_params() const {
  int64_t n = 0;
  for (const Parameter& p : params_) n += p.value.numel() * (p.value.complex ? 2 : 1);
  return n;
}

int UpdateOperator::step_on_tape(Tape& t, int m_t, int z_t, int design) {
  const Tensor& tm = t.value(m_t);
  const Tensor& tz = t.value(z_t);
  const Tensor& td = t.value(design);
  if (tm.complex || tm.shape.size() != 2 || tz.shape != tm.shape || td.shape != tm.shape ||
      tz.complex || td.complex)
    throw std::invalid_argument("step: inputs must be real [H,W] tensors of equal shape");
  const int p = cfg_.patch_size;
  const int h = tm.shape[0], w = tm.shape[1];
  if (h % p != 0 || w % p != 0)
    throw std::invalid_argument("step: patch size must divide tile dimensions");
  const int gh = h / p, gw = w / p;

  int x = t.stack_ch({m_t, z_t, design});              // [3,H,W]
  x = t.patch_split(x, p);                             // [P,3,p,p]
  x = t.fft2(t.complex_from_real(x));
  x = t.complex_pointwise_mul(x, t.param(params_[0]));
  x = t.relu(t.complex_real(t.ifft2(x)));              // [P,c,p,p]
  int merged = t.patch_merge(x, p, gh, gw);            // [c,H,W]
  int tok = t.avg_pool(merged, p);                     // [c,gh,gw]
  tok = t.conv2d(tok, t.param(params_[1]), t.param(params_[2]));
  int up = t.bicubic_upsample(tok, p);                 // [c,H,W]
  int feat = t.add(merged, up);
  int out = t.conv2d(feat, t.param(params_[3]), t.param(params_[4]));  // [1,H,W]
  return t.reshape(t.sigmoid(out), {h, w});
}

GrayImage UpdateOperator::step(const GrayImage& m_t, const GrayImage& z_t,
                               const BinaryImage& design) {
  Tape t;
  int mn = t.leaf(Tensor::from_image(m_t));
  int zn = t.leaf(Tensor::from_image(z_t));
  int dn = t.leaf(Tensor::from_binary(design));
  int out = step_on_tape(t, mn, zn, dn);
  return t.value(out).to_image(m_t.pixel_size);
}

void UpdateOperator::save(const std::string& path) const {
  nlohmann::json header;
  header["format"] = "ILILT001";
  header["dtype"] = "f32";
  header["backbone"] = {{"patch_size", cfg_.patch_size},
                        {"k_max", cfg_.k_max},
                        {"hidden", cfg_.hidden}};
  header["training_step"] = training_step_;
  nlohmann::json plist = nlohmann::json::array();
  for (const Parameter& p : params_)
    plist.push_back({{"name", p.name}, {"shape", p.value.shape}, {"complex", p.value.complex}});
  header["params"] = plist;
  std::string hs = header.dump();

  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + tmp);
    f.write(kMagic, 8);
    uint32_t len = static_cast<uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Parameter& p : params_) {
      std::vector<float> blob(p.value.data.size());
      for (size_t i = 0; i < blob.size(); ++i) blob[i] = static_cast<float>(p.value.data[i]);
      f.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place: " + path);
}

UpdateOperator UpdateOperator::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  if (!f || len == 0 || len > (1u << 20)) throw std::runtime_error("bad checkpoint header length");
  std::string hs(len, '\0');
  f.read(hs.data(), len);
  if (!f) throw std::runtime_error("truncated checkpoint header");
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "ILILT001" ||
      header.value("dtype", "") != "f32")
    throw std::runtime_error("malformed checkpoint header");

  BackboneConfig cfg;
  cfg.patch_size = header.at("backbone").at("patch_size").get<int>();
  cfg.k_max = header.at("backbone").at("k_max").get<int>();
  cfg.hidden = header.at("backbone").at("hidden").get<int>();
  UpdateOperator op(cfg, 0);
  op.training_step_ = header.value("training_step", int64_t{0});

  const auto& plist = header.at("params");
  if (!plist.is_array() || plist.size() != op.params_.size())
    throw std::runtime_error("checkpoint parameter list mismatch");
  for (size_t i = 0; i < op.params_.size(); ++i) {
    Parameter& p = op.params_[i];
    if (plist[i].at("name").get<std::string>() != p.name ||
        plist[i].at("shape").get<std::vector<int>>() != p.value.shape ||
        plist[i].at("complex").get<bool>() != p.value.complex)
      throw std::runtime_error("checkpoint parameter mismatch: " + p.name);
    std::vector<float> blob(p.value.data.size());
    f.read(reinterpret_cast<char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint blob: " + p.name);
    for (size_t k = 0; k < blob.size(); ++k) p.value.data[k] = blob[k];
  }
  return op;
}

Trajectory unroll(const BinaryImage& design, UpdateOperator& op, int T, const LithoContext& lc) {
  if (T < 1) throw std::invalid_argument("unroll: T must be >= 1");
  LithoSimulator sim(lc.kernels, design.height, design.width);
  Trajectory tr;
  tr.masks.push_back(to_gray(design));
  tr.wafers.push_back(
      sigmoid_resist(sim.simulate_intensity(tr.masks.back()), lc.process, lc.relax));
  for (int t = 1; t <= T; ++t) {
    tr.masks.push_back(op.step(tr.masks.back(), tr.wafers.back(), design));
    tr.wafers.push_back(
        sigmoid_resist(sim.simulate_intensity(tr.masks.back()), lc.process, lc.relax));
  }
  return tr;
}

InferResult infer(const BinaryImage& design, UpdateOperator& op, const InferConfig& cfg) {
  if (cfg.t_max < 1) throw std::invalid_argument("infer: t_max must be >= 1");
  if (cfg.residual_tol < 0.0) throw std::invalid_argument("infer: residual_tol must be >= 0");
  LithoSimulator sim(cfg.litho.kernels, design.height, design.width);
  GrayImage m = to_gray(design);
  const double root_n = std::sqrt(static_cast<double>(m.size()));
  InferResult res;
  for (int t = 1; t <= cfg.t_max; ++t) {
    GrayImage z = sigmoid_resist(sim.simulate_intensity(m), cfg.litho.process, cfg.litho.relax);
    GrayImage next = op.step(m, z, design);
    double acc = 0.0;
    for (size_t i = 0; i < m.size(); ++i) {
      double d = next.data[i] - m.data[i];
      acc += d * d;
    }
    double r = std::sqrt(acc) / root_n;
    res.residuals.push_back(r);
    m = std::move(next);
    if (r < cfg.residual_tol) break;
  }
  res.mask = binarize(m, 0.5);
  return res;
}

}  // namespace ililt

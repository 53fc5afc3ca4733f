#include "ililt/grad.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ililt/fft.hpp"
#include "ililt/interp.hpp"

namespace ililt {
namespace {

int64_t elems(const Tensor& t) { return t.numel() * (t.complex ? 2 : 1); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Trailing-two-dims view: shape [..., h, w] as `batch` slices of h*w.
void trailing2(const Tensor& t, int64_t& batch, int& h, int& w) {
  if (t.shape.size() < 2) throw std::invalid_argument("tensor needs >= 2 dims");
  h = t.shape[t.shape.size() - 2];
  w = t.shape[t.shape.size() - 1];
  batch = t.numel() / (static_cast<int64_t>(h) * w);
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool complex) {
  Tensor t;
  t.shape = std::move(shape);
  t.complex = complex;
  for (int d : t.shape)
    if (d <= 0) throw std::invalid_argument("non-positive tensor dim");
  t.data.assign(static_cast<size_t>(t.numel()) * (complex ? 2 : 1), 0.0);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t = zeros({1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::from_image(const GrayImage& img) {
  Tensor t = zeros({img.height, img.width});
  t.data = img.data;
  return t;
}

Tensor Tensor::from_binary(const BinaryImage& img) {
  Tensor t = zeros({img.height, img.width});
  for (size_t i = 0; i < img.data.size(); ++i) t.data[i] = img.data[i] ? 1.0 : 0.0;
  return t;
}

GrayImage Tensor::to_image(double pixel_size) const {
  if (complex || shape.size() != 2) throw std::invalid_argument("to_image needs a real [H,W] tensor");
  GrayImage img = GrayImage::zeros(shape[1], shape[0], pixel_size);
  img.data = data;
  return img;
}

Parameter::Parameter(std::string name_, Tensor v) : name(std::move(name_)), value(std::move(v)) {
  size_t n = static_cast<size_t>(elems(value));
  grad.assign(n, 0.0);
  adam_m.assign(n, 0.0);
  adam_v.assign(n, 0.0);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::nd(int i) { return nodes_[static_cast<size_t>(i)]; }
const Tape::Node& Tape::nd(int i) const { return nodes_[static_cast<size_t>(i)]; }

void Tape::check(int i) const {
  if (i < 0 || i >= static_cast<int>(nodes_.size())) throw std::invalid_argument("node not on tape");
}

const Tensor& Tape::value(int node) const {
  check(node);
  return nd(node).val;
}

const std::vector<double>& Tape::grad(int node) const {
  check(node);
  return nd(node).grad;
}

int Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(value);
  n.needs_grad = false;
  return push(std::move(n));
}

int Tape::param(Parameter& p) {
  Node n;
  n.op = Op::Leaf;
  n.val = p.value;
  n.needs_grad = true;
  n.parameter = &p;
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  check(a);
  check(b);
  const Tensor& ta = nd(a).val;
  const Tensor& tb = nd(b).val;
  if (ta.shape != tb.shape || ta.complex != tb.complex)
    throw std::invalid_argument("add: shape mismatch");
  Node n;
  n.op = Op::Add;
  n.in = {a, b};
  n.val = ta;
  for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] += tb.data[i];
  n.needs_grad = nd(a).needs_grad || nd(b).needs_grad;
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  check(a);
  check(b);
  const Tensor& ta = nd(a).val;
  const Tensor& tb = nd(b).val;
  if (ta.complex || tb.complex) throw std::invalid_argument("mul: real tensors only");
  if (ta.shape != tb.shape) throw std::invalid_argument("mul: shape mismatch");
  Node n;
  n.op = Op::Mul;
  n.in = {a, b};
  n.val = ta;
  for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] *= tb.data[i];
  n.needs_grad = nd(a).needs_grad || nd(b).needs_grad;
  return push(std::move(n));
}

int Tape::scalar_mul(int a, double s) {
  check(a);
  Node n;
  n.op = Op::ScalarMul;
  n.in = {a};
  n.s = s;
  n.val = nd(a).val;
  for (double& v : n.val.data) v *= s;
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::scalar_affine(int a, double s, double c) {
  check(a);
  if (nd(a).val.complex) throw std::invalid_argument("scalar_affine: real tensors only");
  Node n;
  n.op = Op::ScalarAffine;
  n.in = {a};
  n.s = s;
  n.c = c;
  n.val = nd(a).val;
  for (double& v : n.val.data) v = s * v + c;
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::sigmoid(int a) {
  check(a);
  if (nd(a).val.complex) throw std::invalid_argument("sigmoid: real tensors only");
  Node n;
  n.op = Op::Sigmoid;
  n.in = {a};
  n.val = nd(a).val;
  for (double& v : n.val.data) v = stable_sigmoid(v);
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::relu(int a) {
  check(a);
  if (nd(a).val.complex) throw std::invalid_argument("relu: real tensors only");
  Node n;
  n.op = Op::Relu;
  n.in = {a};
  n.val = nd(a).val;
  for (double& v : n.val.data) v = v > 0.0 ? v : 0.0;
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::sum(int a) {
  check(a);
  if (nd(a).val.complex) throw std::invalid_argument("sum: real tensors only");
  double acc = 0.0;
  for (double v : nd(a).val.data) acc += v;
  Node n;
  n.op = Op::Sum;
  n.in = {a};
  n.val = Tensor::scalar(acc);
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::frobenius_sq_diff(int a, int b) {
  check(a);
  check(b);
  const Tensor& ta = nd(a).val;
  const Tensor& tb = nd(b).val;
  if (ta.complex || tb.complex) throw std::invalid_argument("frobenius_sq_diff: real tensors only");
  if (ta.shape != tb.shape) throw std::invalid_argument("frobenius_sq_diff: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < ta.data.size(); ++i) {
    double d = ta.data[i] - tb.data[i];
    acc += d * d;
  }
  Node n;
  n.op = Op::FrobSqDiff;
  n.in = {a, b};
  n.val = Tensor::scalar(acc);
  n.needs_grad = nd(a).needs_grad || nd(b).needs_grad;
  return push(std::move(n));
}

int Tape::stop_gradient(int a) {
  check(a);
  Node n;
  n.op = Op::StopGrad;
  n.in = {a};
  n.val = nd(a).val;
  n.needs_grad = false;
  return push(std::move(n));
}

int Tape::reshape(int a, std::vector<int> shape) {
  check(a);
  Node n;
  n.op = Op::Reshape;
  n.in = {a};
  n.val = nd(a).val;
  int64_t numel = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("reshape: non-positive dim");
    numel *= d;
  }
  if (numel != n.val.numel()) throw std::invalid_argument("reshape: element count mismatch");
  n.val.shape = std::move(shape);
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::stack_ch(const std::vector<int>& planes) {
  if (planes.empty()) throw std::invalid_argument("stack_ch: no inputs");
  for (int p : planes) check(p);
  const Tensor& first = nd(planes[0]).val;
  if (first.complex || first.shape.size() != 2)
    throw std::invalid_argument("stack_ch: real [H,W] inputs only");
  for (int p : planes)
    if (nd(p).val.shape != first.shape || nd(p).val.complex)
      throw std::invalid_argument("stack_ch: shape mismatch");
  int h = first.shape[0], w = first.shape[1];
  Node n;
  n.op = Op::StackCh;
  n.in = planes;
  n.val = Tensor::zeros({static_cast<int>(planes.size()), h, w});
  size_t plane = static_cast<size_t>(h) * w;
  for (size_t k = 0; k < planes.size(); ++k)
    std::memcpy(n.val.data.data() + k * plane, nd(planes[k]).val.data.data(),
                plane * sizeof(double));
  n.needs_grad = false;
  for (int p : planes) n.needs_grad = n.needs_grad || nd(p).needs_grad;
  return push(std::move(n));
}

int Tape::conv2d(int x, int w, int bias) {
  check(x);
  check(w);
  const Tensor& tx = nd(x).val;
  const Tensor& tw = nd(w).val;
  if (tx.complex || tw.complex) throw std::invalid_argument("conv2d: real tensors only");
  if (tx.shape.size() != 3 || tw.shape.size() != 4)
    throw std::invalid_argument("conv2d: expects x [Cin,H,W], w [Cout,Cin,kh,kw]");
  int cin = tx.shape[0], h = tx.shape[1], wd = tx.shape[2];
  int cout = tw.shape[0], kh = tw.shape[2], kw = tw.shape[3];
  if (tw.shape[1] != cin) throw std::invalid_argument("conv2d: channel mismatch");
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: odd kernel only");
  const double* bptr = nullptr;
  if (bias >= 0) {
    check(bias);
    const Tensor& tb = nd(bias).val;
    if (tb.complex || tb.shape != std::vector<int>{cout})
      throw std::invalid_argument("conv2d: bias must be real [Cout]");
    bptr = tb.data.data();
  }
  int ph = kh / 2, pw = kw / 2;
  Node n;
  n.op = Op::Conv2d;
  n.in = bias >= 0 ? std::vector<int>{x, w, bias} : std::vector<int>{x, w};
  n.val = Tensor::zeros({cout, h, wd});
  for (int o = 0; o < cout; ++o) {
    double b0 = bptr ? bptr[o] : 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j) {
        double acc = b0;
        for (int ci = 0; ci < cin; ++ci)
          for (int u = 0; u < kh; ++u) {
            int iy = i + u - ph;
            if (iy < 0 || iy >= h) continue;
            for (int v = 0; v < kw; ++v) {
              int ix = j + v - pw;
              if (ix < 0 || ix >= wd) continue;
              acc += tw.data[((static_cast<size_t>(o) * cin + ci) * kh + u) * kw + v] *
                     tx.data[(static_cast<size_t>(ci) * h + iy) * wd + ix];
            }
          }
        n.val.data[(static_cast<size_t>(o) * h + i) * wd + j] = acc;
      }
  }
  n.needs_grad = nd(x).needs_grad || nd(w).needs_grad || (bias >= 0 && nd(bias).needs_grad);
  return push(std::move(n));
}

int Tape::complex_from_real(int a) {
  check(a);
  if (nd(a).val.complex) throw std::invalid_argument("complex_from_real: input already complex");
  Node n;
  n.op = Op::ComplexFromReal;
  n.in = {a};
  n.val = Tensor::zeros(nd(a).val.shape, true);
  for (size_t i = 0; i < nd(a).val.data.size(); ++i) n.val.data[2 * i] = nd(a).val.data[i];
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::complex_real(int a) {
  check(a);
  if (!nd(a).val.complex) throw std::invalid_argument("complex_real: input not complex");
  Node n;
  n.op = Op::ComplexReal;
  n.in = {a};
  n.val = Tensor::zeros(nd(a).val.shape, false);
  for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] = nd(a).val.data[2 * i];
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::fft2(int a) {
  check(a);
  const Tensor& ta = nd(a).val;
  if (!ta.complex) throw std::invalid_argument("fft2: complex input required");
  int64_t batch;
  int h, w;
  trailing2(ta, batch, h, w);
  Node n;
  n.op = Op::Fft2;
  n.in = {a};
  n.val = ta;
  auto* c = reinterpret_cast<cplx*>(n.val.data.data());
  for (int64_t b = 0; b < batch; ++b) ililt::fft2(c + b * h * w, h, w, false);
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::ifft2(int a) {
  check(a);
  const Tensor& ta = nd(a).val;
  if (!ta.complex) throw std::invalid_argument("ifft2: complex input required");
  int64_t batch;
  int h, w;
  trailing2(ta, batch, h, w);
  Node n;
  n.op = Op::Ifft2;
  n.in = {a};
  n.val = ta;
  auto* c = reinterpret_cast<cplx*>(n.val.data.data());
  for (int64_t b = 0; b < batch; ++b) ililt::fft2(c + b * h * w, h, w, true);
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::complex_pointwise_mul(int x, int w) {
  check(x);
  check(w);
  const Tensor& tx = nd(x).val;
  const Tensor& tw = nd(w).val;
  if (!tx.complex || !tw.complex)
    throw std::invalid_argument("complex_pointwise_mul: complex tensors required");
  if (tx.shape.size() != 4 || tw.shape.size() != 4)
    throw std::invalid_argument("complex_pointwise_mul: expects x [B,Cin,H,W], w [Cout,Cin,2m,2m]");
  int bsz = tx.shape[0], cin = tx.shape[1], h = tx.shape[2], wd = tx.shape[3];
  int cout = tw.shape[0];
  int m2 = tw.shape[2];
  if (tw.shape[1] != cin || tw.shape[3] != m2 || m2 % 2 != 0)
    throw std::invalid_argument("complex_pointwise_mul: weight shape must be [Cout,Cin,2m,2m]");
  int m = m2 / 2;
  if (m2 > h || m2 > wd) throw std::invalid_argument("complex_pointwise_mul: too many modes");
  Node n;
  n.op = Op::CplxPointwiseMul;
  n.in = {x, w};
  n.val = Tensor::zeros({bsz, cout, h, wd}, true);
  const auto* xc = reinterpret_cast<const cplx*>(tx.data.data());
  const auto* wc = reinterpret_cast<const cplx*>(tw.data.data());
  auto* yc = reinterpret_cast<cplx*>(n.val.data.data());
  for (int b = 0; b < bsz; ++b)
    for (int o = 0; o < cout; ++o)
      for (int su = 0; su < 2; ++su)
        for (int sv = 0; sv < 2; ++sv)
          for (int u = 0; u < m; ++u) {
            int yu = su ? h - m + u : u;
            int wu = su ? m + u : u;
            for (int v = 0; v < m; ++v) {
              int yv = sv ? wd - m + v : v;
              int wv = sv ? m + v : v;
              cplx acc = 0.0;
              for (int i = 0; i < cin; ++i)
                acc += wc[((static_cast<size_t>(o) * cin + i) * m2 + wu) * m2 + wv] *
                       xc[((static_cast<size_t>(b) * cin + i) * h + yu) * wd + yv];
              yc[((static_cast<size_t>(b) * cout + o) * h + yu) * wd + yv] = acc;
            }
          }
  n.needs_grad = nd(x).needs_grad || nd(w).needs_grad;
  return push(std::move(n));
}

int Tape::patch_split(int a, int p) {
  check(a);
  const Tensor& ta = nd(a).val;
  if (ta.shape.size() != 3) throw std::invalid_argument("patch_split: expects [C,H,W]");
  int c = ta.shape[0], h = ta.shape[1], w = ta.shape[2];
  if (p <= 0 || h % p != 0 || w % p != 0)
    throw std::invalid_argument("patch_split: patch size must divide dimensions");
  int gh = h / p, gw = w / p;
  int e = ta.complex ? 2 : 1;
  Node n;
  n.op = Op::PatchSplit;
  n.in = {a};
  n.p = p;
  n.gh = gh;
  n.gw = gw;
  n.val = Tensor::zeros({gh * gw, c, p, p}, ta.complex);
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      int q = py * gw + px;
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < p; ++y) {
          size_t src = ((static_cast<size_t>(ci) * h + (py * p + y)) * w + px * p) * e;
          size_t dst = (((static_cast<size_t>(q) * c + ci) * p + y) * p) * e;
          std::memcpy(n.val.data.data() + dst, ta.data.data() + src,
                      static_cast<size_t>(p) * e * sizeof(double));
        }
    }
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::patch_merge(int a, int p, int gh, int gw) {
  check(a);
  const Tensor& ta = nd(a).val;
  if (ta.shape.size() != 4) throw std::invalid_argument("patch_merge: expects [P,C,p,p]");
  if (ta.shape[0] != gh * gw || ta.shape[2] != p || ta.shape[3] != p)
    throw std::invalid_argument("patch_merge: grid/patch mismatch");
  int c = ta.shape[1];
  int h = gh * p, w = gw * p;
  int e = ta.complex ? 2 : 1;
  Node n;
  n.op = Op::PatchMerge;
  n.in = {a};
  n.p = p;
  n.gh = gh;
  n.gw = gw;
  n.val = Tensor::zeros({c, h, w}, ta.complex);
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      int q = py * gw + px;
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < p; ++y) {
          size_t src = (((static_cast<size_t>(q) * c + ci) * p + y) * p) * e;
          size_t dst = ((static_cast<size_t>(ci) * h + (py * p + y)) * w + px * p) * e;
          std::memcpy(n.val.data.data() + dst, ta.data.data() + src,
                      static_cast<size_t>(p) * e * sizeof(double));
        }
    }
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::avg_pool(int a, int factor) {
  check(a);
  const Tensor& ta = nd(a).val;
  if (ta.complex) throw std::invalid_argument("avg_pool: real tensors only");
  int64_t batch;
  int h, w;
  trailing2(ta, batch, h, w);
  if (factor <= 0 || h % factor != 0 || w % factor != 0)
    throw std::invalid_argument("avg_pool: factor must divide dimensions");
  int oh = h / factor, ow = w / factor;
  std::vector<int> oshape = ta.shape;
  oshape[oshape.size() - 2] = oh;
  oshape[oshape.size() - 1] = ow;
  Node n;
  n.op = Op::AvgPool;
  n.in = {a};
  n.p = factor;
  n.val = Tensor::zeros(oshape);
  double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int64_t b = 0; b < batch; ++b) {
    const double* src = ta.data.data() + b * h * w;
    double* dst = n.val.data.data() + b * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (int u = 0; u < factor; ++u)
          for (int v = 0; v < factor; ++v)
            acc += src[static_cast<size_t>(i * factor + u) * w + (j * factor + v)];
        dst[static_cast<size_t>(i) * ow + j] = acc * inv;
      }
  }
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::bicubic_upsample(int a, int factor) {
  check(a);
  const Tensor& ta = nd(a).val;
  if (ta.complex) throw std::invalid_argument("bicubic_upsample: real tensors only");
  if (factor <= 0) throw std::invalid_argument("bicubic_upsample: bad factor");
  int64_t batch;
  int h, w;
  trailing2(ta, batch, h, w);
  int oh = h * factor, ow = w * factor;
  std::vector<int> oshape = ta.shape;
  oshape[oshape.size() - 2] = oh;
  oshape[oshape.size() - 1] = ow;
  Node n;
  n.op = Op::BicubicUp;
  n.in = {a};
  n.p = factor;
  n.val = Tensor::zeros(oshape);
  BicubicAxis ay(h, factor), ax(w, factor);
  for (int64_t b = 0; b < batch; ++b) {
    const double* src = ta.data.data() + b * h * w;
    double* dst = n.val.data.data() + b * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int ty = 0; ty < 4; ++ty) {
          double wy = ay.wgt[static_cast<size_t>(oy) * 4 + ty];
          int iy = ay.idx[static_cast<size_t>(oy) * 4 + ty];
          for (int tx = 0; tx < 4; ++tx)
            acc += wy * ax.wgt[static_cast<size_t>(ox) * 4 + tx] *
                   src[static_cast<size_t>(iy) * w + ax.idx[static_cast<size_t>(ox) * 4 + tx]];
        }
        dst[static_cast<size_t>(oy) * ow + ox] = acc;
      }
  }
  n.needs_grad = nd(a).needs_grad;
  return push(std::move(n));
}

int Tape::litho_intensity(int x, const LithoSimulator* sim) {
  check(x);
  if (!sim) throw std::invalid_argument("litho_intensity: null simulator");
  const Tensor& tx = nd(x).val;
  if (tx.complex || tx.shape.size() != 2 || tx.shape[0] != sim->height() ||
      tx.shape[1] != sim->width())
    throw std::invalid_argument("litho_intensity: mask/simulator dimension mismatch");
  Node n;
  n.op = Op::LithoIntensity;
  n.in = {x};
  n.sim = sim;
  n.val = Tensor::from_image(sim->simulate_intensity(tx.to_image(1.0)));
  n.needs_grad = nd(x).needs_grad;
  return push(std::move(n));
}

void Tape::backward(int loss, double seed) {
  check(loss);
  const Node& ln = nd(loss);
  if (ln.val.complex || ln.val.numel() != 1)
    throw std::invalid_argument("backward: loss must be a real scalar");
  for (Node& n : nodes_) n.grad.clear();
  nd(loss).grad.assign(1, seed);

  auto ensure = [&](int i) -> std::vector<double>& {
    Node& n = nd(i);
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(elems(n.val)), 0.0);
    return n.grad;
  };

  for (int i = loss; i >= 0; --i) {
    Node& n = nd(i);
    if (n.grad.empty() || !n.needs_grad) continue;
    const std::vector<double>& g = n.grad;
    switch (n.op) {
      case Op::Leaf: {
        if (n.parameter) {
          std::vector<double>& pg = n.parameter->grad;
          for (size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
        }
        break;
      }
      case Op::Add: {
        for (int side = 0; side < 2; ++side) {
          if (!nd(n.in[side]).needs_grad) continue;
          std::vector<double>& gi = ensure(n.in[side]);
          for (size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& ta = nd(n.in[0]).val;
        const Tensor& tb = nd(n.in[1]).val;
        if (nd(n.in[0]).needs_grad) {
          std::vector<double>& ga = ensure(n.in[0]);
          for (size_t k = 0; k < g.size(); ++k) ga[k] += tb.data[k] * g[k];
        }
        if (nd(n.in[1]).needs_grad) {
          std::vector<double>& gb = ensure(n.in[1]);
          for (size_t k = 0; k < g.size(); ++k) gb[k] += ta.data[k] * g[k];
        }
        break;
      }
      case Op::ScalarMul:
      case Op::ScalarAffine: {
        if (!nd(n.in[0]).needs_grad) break;
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < g.size(); ++k) gi[k] += n.s * g[k];
        break;
      }
      case Op::Sigmoid: {
        if (!nd(n.in[0]).needs_grad) break;
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < g.size(); ++k) {
          double y = n.val.data[k];
          gi[k] += y * (1.0 - y) * g[k];
        }
        break;
      }
      case Op::Relu: {
        if (!nd(n.in[0]).needs_grad) break;
        const Tensor& tx = nd(n.in[0]).val;
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < g.size(); ++k)
          if (tx.data[k] > 0.0) gi[k] += g[k];
        break;
      }
      case Op::Sum: {
        if (!nd(n.in[0]).needs_grad) break;
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < gi.size(); ++k) gi[k] += g[0];
        break;
      }
      case Op::FrobSqDiff: {
        const Tensor& ta = nd(n.in[0]).val;
        const Tensor& tb = nd(n.in[1]).val;
        bool wa = nd(n.in[0]).needs_grad, wb = nd(n.in[1]).needs_grad;
        if (wa) {
          std::vector<double>& ga = ensure(n.in[0]);
          for (size_t k = 0; k < ta.data.size(); ++k)
            ga[k] += 2.0 * (ta.data[k] - tb.data[k]) * g[0];
        }
        if (wb) {
          std::vector<double>& gb = ensure(n.in[1]);
          for (size_t k = 0; k < ta.data.size(); ++k)
            gb[k] -= 2.0 * (ta.data[k] - tb.data[k]) * g[0];
        }
        break;
      }
      case Op::StopGrad:
        break;
      case Op::Reshape: {
        if (!nd(n.in[0]).needs_grad) break;
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
        break;
      }
      case Op::StackCh: {
        size_t plane = n.val.data.size() / n.in.size();
        for (size_t k = 0; k < n.in.size(); ++k) {
          if (!nd(n.in[k]).needs_grad) continue;
          std::vector<double>& gi = ensure(n.in[k]);
          for (size_t j = 0; j < plane; ++j) gi[j] += g[k * plane + j];
        }
        break;
      }
      case Op::Conv2d: {
        const Tensor& tx = nd(n.in[0]).val;
        const Tensor& tw = nd(n.in[1]).val;
        int cin = tx.shape[0], h = tx.shape[1], wd = tx.shape[2];
        int cout = tw.shape[0], kh = tw.shape[2], kw = tw.shape[3];
        int ph = kh / 2, pw = kw / 2;
        bool wx = nd(n.in[0]).needs_grad, ww = nd(n.in[1]).needs_grad;
        bool wb = n.in.size() > 2 && nd(n.in[2]).needs_grad;
        std::vector<double>* gx = wx ? &ensure(n.in[0]) : nullptr;
        std::vector<double>* gw = ww ? &ensure(n.in[1]) : nullptr;
        std::vector<double>* gb = wb ? &ensure(n.in[2]) : nullptr;
        for (int o = 0; o < cout; ++o)
          for (int i2 = 0; i2 < h; ++i2)
            for (int j = 0; j < wd; ++j) {
              double go = g[(static_cast<size_t>(o) * h + i2) * wd + j];
              if (go == 0.0) continue;
              if (gb) (*gb)[o] += go;
              for (int ci = 0; ci < cin; ++ci)
                for (int u = 0; u < kh; ++u) {
                  int iy = i2 + u - ph;
                  if (iy < 0 || iy >= h) continue;
                  for (int v = 0; v < kw; ++v) {
                    int ix = j + v - pw;
                    if (ix < 0 || ix >= wd) continue;
                    size_t wi = ((static_cast<size_t>(o) * cin + ci) * kh + u) * kw + v;
                    size_t xi = (static_cast<size_t>(ci) * h + iy) * wd + ix;
                    if (gx) (*gx)[xi] += tw.data[wi] * go;
                    if (gw) (*gw)[wi] += tx.data[xi] * go;
                  }
                }
            }
        break;
      }
      case Op::ComplexFromReal: {
        if (!nd(n.in[0]).needs_grad) break;
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < gi.size(); ++k) gi[k] += g[2 * k];
        break;
      }
      case Op::ComplexReal: {
        if (!nd(n.in[0]).needs_grad) break;
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < g.size(); ++k) gi[2 * k] += g[k];
        break;
      }
      case Op::Fft2:
      case Op::Ifft2: {
        // Adjoint of the unnormalized DFT is n * IDFT; of the 1/n-scaled
        // inverse it is (1/n) * DFT (conjugate-transpose identities).
        if (!nd(n.in[0]).needs_grad) break;
        int64_t batch;
        int h, w;
        trailing2(n.val, batch, h, w);
        std::vector<double> buf(g);
        auto* c = reinterpret_cast<cplx*>(buf.data());
        bool fwd = n.op == Op::Fft2;
        double scale = fwd ? static_cast<double>(h) * w : 1.0 / (static_cast<double>(h) * w);
        for (int64_t b = 0; b < batch; ++b) ililt::fft2(c + b * h * w, h, w, fwd);
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < gi.size(); ++k) gi[k] += scale * buf[k];
        break;
      }
      case Op::CplxPointwiseMul: {
        const Tensor& tx = nd(n.in[0]).val;
        const Tensor& tw = nd(n.in[1]).val;
        int bsz = tx.shape[0], cin = tx.shape[1], h = tx.shape[2], wd = tx.shape[3];
        int cout = tw.shape[0], m2 = tw.shape[2], m = m2 / 2;
        bool wantx = nd(n.in[0]).needs_grad, wantw = nd(n.in[1]).needs_grad;
        const auto* xc = reinterpret_cast<const cplx*>(tx.data.data());
        const auto* wc = reinterpret_cast<const cplx*>(tw.data.data());
        const auto* gc = reinterpret_cast<const cplx*>(g.data());
        cplx* gxc = nullptr;
        cplx* gwc = nullptr;
        if (wantx) gxc = reinterpret_cast<cplx*>(ensure(n.in[0]).data());
        if (wantw) gwc = reinterpret_cast<cplx*>(ensure(n.in[1]).data());
        for (int b = 0; b < bsz; ++b)
          for (int o = 0; o < cout; ++o)
            for (int su = 0; su < 2; ++su)
              for (int sv = 0; sv < 2; ++sv)
                for (int u = 0; u < m; ++u) {
                  int yu = su ? h - m + u : u;
                  int wu = su ? m + u : u;
                  for (int v = 0; v < m; ++v) {
                    int yv = sv ? wd - m + v : v;
                    int wv = sv ? m + v : v;
                    cplx go = gc[((static_cast<size_t>(b) * cout + o) * h + yu) * wd + yv];
                    if (go == cplx(0.0, 0.0)) continue;
                    for (int ci = 0; ci < cin; ++ci) {
                      size_t wi = ((static_cast<size_t>(o) * cin + ci) * m2 + wu) * m2 + wv;
                      size_t xi = ((static_cast<size_t>(b) * cin + ci) * h + yu) * wd + yv;
                      if (gxc) gxc[xi] += std::conj(wc[wi]) * go;
                      if (gwc) gwc[wi] += std::conj(xc[xi]) * go;
                    }
                  }
                }
        break;
      }
      case Op::PatchSplit: {
        if (!nd(n.in[0]).needs_grad) break;
        const Tensor& ta = nd(n.in[0]).val;
        int c = ta.shape[0], h = ta.shape[1], w = ta.shape[2];
        int p = n.p, gw2 = n.gw;
        int e = ta.complex ? 2 : 1;
        std::vector<double>& gi = ensure(n.in[0]);
        for (int py = 0; py < n.gh; ++py)
          for (int px = 0; px < gw2; ++px) {
            int q = py * gw2 + px;
            for (int ci = 0; ci < c; ++ci)
              for (int y = 0; y < p; ++y) {
                size_t dst = ((static_cast<size_t>(ci) * h + (py * p + y)) * w + px * p) * e;
                size_t src = (((static_cast<size_t>(q) * c + ci) * p + y) * p) * e;
                for (int k = 0; k < p * e; ++k) gi[dst + k] += g[src + k];
              }
          }
        break;
      }
      case Op::PatchMerge: {
        if (!nd(n.in[0]).needs_grad) break;
        const Tensor& ta = nd(n.in[0]).val;
        int c = ta.shape[1];
        int p = n.p, gw2 = n.gw;
        int h = n.gh * p, w = gw2 * p;
        int e = ta.complex ? 2 : 1;
        std::vector<double>& gi = ensure(n.in[0]);
        for (int py = 0; py < n.gh; ++py)
          for (int px = 0; px < gw2; ++px) {
            int q = py * gw2 + px;
            for (int ci = 0; ci < c; ++ci)
              for (int y = 0; y < p; ++y) {
                size_t src = ((static_cast<size_t>(ci) * h + (py * p + y)) * w + px * p) * e;
                size_t dst = (((static_cast<size_t>(q) * c + ci) * p + y) * p) * e;
                for (int k = 0; k < p * e; ++k) gi[dst + k] += g[src + k];
              }
          }
        break;
      }
      case Op::AvgPool: {
        if (!nd(n.in[0]).needs_grad) break;
        const Tensor& ta = nd(n.in[0]).val;
        int64_t batch;
        int h, w;
        trailing2(ta, batch, h, w);
        int f = n.p, oh = h / f, ow = w / f;
        double inv = 1.0 / (static_cast<double>(f) * f);
        std::vector<double>& gi = ensure(n.in[0]);
        for (int64_t b = 0; b < batch; ++b) {
          const double* gs = g.data() + b * oh * ow;
          double* gd = gi.data() + b * h * w;
          for (int i2 = 0; i2 < oh; ++i2)
            for (int j = 0; j < ow; ++j) {
              double go = gs[static_cast<size_t>(i2) * ow + j] * inv;
              if (go == 0.0) continue;
              for (int u = 0; u < f; ++u)
                for (int v = 0; v < f; ++v)
                  gd[static_cast<size_t>(i2 * f + u) * w + (j * f + v)] += go;
            }
        }
        break;
      }
      case Op::BicubicUp: {
        if (!nd(n.in[0]).needs_grad) break;
        const Tensor& ta = nd(n.in[0]).val;
        int64_t batch;
        int h, w;
        trailing2(ta, batch, h, w);
        int f = n.p, oh = h * f, ow = w * f;
        BicubicAxis ay(h, f), ax(w, f);
        std::vector<double>& gi = ensure(n.in[0]);
        for (int64_t b = 0; b < batch; ++b) {
          const double* gs = g.data() + b * oh * ow;
          double* gd = gi.data() + b * h * w;
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double go = gs[static_cast<size_t>(oy) * ow + ox];
              if (go == 0.0) continue;
              for (int ty = 0; ty < 4; ++ty) {
                double wy = ay.wgt[static_cast<size_t>(oy) * 4 + ty];
                int iy = ay.idx[static_cast<size_t>(oy) * 4 + ty];
                for (int tx = 0; tx < 4; ++tx)
                  gd[static_cast<size_t>(iy) * w + ax.idx[static_cast<size_t>(ox) * 4 + tx]] +=
                      wy * ax.wgt[static_cast<size_t>(ox) * 4 + tx] * go;
              }
            }
        }
        break;
      }
      case Op::LithoIntensity: {
        if (!nd(n.in[0]).needs_grad) break;
        const Tensor& tx = nd(n.in[0]).val;
        std::vector<double> gm = n.sim->intensity_gradient(tx.to_image(1.0), g);
        std::vector<double>& gi = ensure(n.in[0]);
        for (size_t k = 0; k < gi.size(); ++k) gi[k] += gm[k];
        break;
      }
    }
  }
}

void adam_step(const std::vector<Parameter*>& params, double lr, double beta1, double beta2,
               double eps, double weight_decay) {
  for (Parameter* p : params) {
    p->adam_steps += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p->adam_steps));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p->adam_steps));
    for (size_t i = 0; i < p->grad.size(); ++i) {
      double g = p->grad[i];
      p->adam_m[i] = beta1 * p->adam_m[i] + (1.0 - beta1) * g;
      p->adam_v[i] = beta2 * p->adam_v[i] + (1.0 - beta2) * g * g;
      double mhat = p->adam_m[i] / bc1;
      double vhat = p->adam_v[i] / bc2;
      p->value.data[i] -=
          lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p->value.data[i]);
    }
    p->zero_grad();
  }
}

}  // namespace ililt

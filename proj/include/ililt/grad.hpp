// Minimal reverse-mode differentiation over a fixed primitive set, enough
// to train the update operator by backpropagation through time. A Tape is
// single-writer: one sample's forward/backward runs on one tape on one
// thread; parameter gradient merges happen at batch boundaries.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ililt/litho.hpp"

namespace ililt {

// Dense value. Complex tensors store interleaved (re,im) pairs and keep the
// logical shape; data.size() == numel * (complex ? 2 : 1).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool complex = false;

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  static Tensor zeros(std::vector<int> shape, bool complex = false);
  static Tensor scalar(double v);
  static Tensor from_image(const GrayImage& img);          // [H,W]
  static Tensor from_binary(const BinaryImage& img);       // [H,W], 0/1
  GrayImage to_image(double pixel_size) const;             // requires [H,W] real
};

// Trainable value with its gradient accumulator and Adam state. The
// accumulator is zeroed by adam_step, not by backward.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;
  std::vector<double> adam_m, adam_v;
  int64_t adam_steps = 0;

  explicit Parameter(std::string name, Tensor v);
  void zero_grad();
};

class Tape {
 public:
  // Leaves. Constant leaves never receive gradients; param leaves
  // accumulate into their Parameter when backward() runs.
  int leaf(Tensor value);
  int param(Parameter& p);

  int add(int a, int b);
  int mul(int a, int b);
  int scalar_mul(int a, double s);
  int scalar_affine(int a, double s, double c);  // s*x + c
  int sigmoid(int a);
  int relu(int a);
  int sum(int a);                       // -> [1]
  int frobenius_sq_diff(int a, int b);  // -> [1]
  int stop_gradient(int a);
  int reshape(int a, std::vector<int> shape);  // same element count
  int stack_ch(const std::vector<int>& planes);  // k of [H,W] -> [k,H,W]

  // x [Cin,H,W], w [Cout,Cin,kh,kw] (odd kernel), optional bias [Cout];
  // zero padding, stride 1.
  int conv2d(int x, int w, int bias = -1);

  // Complex pipeline. fft2/ifft2 transform the trailing two dims of a
  // complex tensor (power-of-two sizes only); inverse carries the 1/n.
  int complex_from_real(int a);
  int complex_real(int a);
  int fft2(int a);
  int ifft2(int a);

  // x [B,Cin,H,W] complex, w [Cout,Cin,2m,2m] complex. Learnable spectral
  // weights: a shared per-mode complex linear map over channels, applied on
  // the four corner mode blocks (m modes per axis per sign, FNO-style
  // truncation); all other output modes are zero.
  int complex_pointwise_mul(int x, int w);

  int patch_split(int a, int p);              // [C,H,W] -> [P,C,p,p]
  int patch_merge(int a, int p, int gh, int gw);  // [P,C,p,p] -> [C,gh*p,gw*p]
  int avg_pool(int a, int factor);
  int bicubic_upsample(int a, int factor);

  // Forward lithography intensity as one primitive; backward routes the
  // upstream through the simulator's analytic adjoint. x is a [H,W] mask.
  int litho_intensity(int x, const LithoSimulator* sim);

  // Reverse sweep from a scalar loss node; accumulates seed * dloss/dparam
  // into every Parameter reached. May be called repeatedly.
  void backward(int loss, double seed = 1.0);

  const Tensor& value(int node) const;
  // Gradient of the last backward() at a node (test/inspection use).
  const std::vector<double>& grad(int node) const;

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf, Add, Mul, ScalarMul, ScalarAffine, Sigmoid, Relu, Sum, FrobSqDiff,
    StopGrad, Reshape, StackCh, Conv2d, ComplexFromReal, ComplexReal, Fft2,
    Ifft2, CplxPointwiseMul, PatchSplit, PatchMerge, AvgPool, BicubicUp,
    LithoIntensity,
  };
  struct Node {
    Op op;
    std::vector<int> in;
    Tensor val;
    std::vector<double> grad;
    bool needs_grad = false;
    double s = 0.0, c = 0.0;
    int p = 0, gh = 0, gw = 0;
    Parameter* parameter = nullptr;
    const LithoSimulator* sim = nullptr;
  };

  int push(Node n);
  Node& nd(int i);
  const Node& nd(int i) const;
  void check(int i) const;

  std::vector<Node> nodes_;
};

// Decoupled weight decay (AdamW): p -= lr * (mhat/(sqrt(vhat)+eps) + wd*p).
// Zeroes every gradient accumulator afterwards.
void adam_step(const std::vector<Parameter*>& params, double lr, double beta1, double beta2,
               double eps, double weight_decay);

}  // namespace ililt

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "slpcc/rng.hpp"

namespace slpcc::nn {

using Vec = std::vector<double>;

// One parameter tensor with its gradient and Adam moments. Training runs in
// double throughout; weights cross process boundaries as float32, so loaders
// round-trip through float before inference.
struct Param {
  Vec w, g, m, v;

  void resize(size_t n) {
    w.assign(n, 0.0);
    g.assign(n, 0.0);
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
  size_t size() const { return w.size(); }
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_uniform(Param& p, size_t fan_in, Rng& rng);

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// log(1 + e^x) without overflow; sigmoid is its derivative.
double softplus(double x);
double sigmoid(double x);

// y = W x + b with W row-major (out x in).
//
// All backward() functions in this module ACCUMULATE: parameter gradients add
// into Param::g and input gradients add into dx, so callers zero their
// gradient buffers once per backward pass and skip connections come for free.
struct Linear {
  int in = 0, out = 0;
  Param weight, bias;

  void init(int in_dim, int out_dim, Rng& rng);
  void forward(const double* x, double* y) const;
  void backward(const double* x, const double* dy, double* dx);
  void params(std::vector<Param*>& list);
};

// Activations one LSTM forward pass records for truncated-free full BPTT.
struct LstmTrace {
  int steps = 0;
  Vec x;      // steps x in
  Vec gates;  // steps x 4H, post-activation, gate order [i f g o]
  Vec c;      // steps x H
  Vec h;      // steps x H
};

// Single-layer LSTM, zero initial state.
struct Lstm {
  int in = 0, hidden = 0;
  Param w;  // 4H x in
  Param u;  // 4H x H
  Param b;  // 4H

  void init(int in_dim, int hidden_dim, Rng& rng);
  // trace is required (it doubles as the output: trace->h).
  void forward(const double* x, int steps, LstmTrace* trace) const;
  // dh: steps x H gradient on every hidden state; dx (steps x in) may be null.
  void backward(const LstmTrace& trace, const double* dh, double* dx);
  void params(std::vector<Param*>& list);
};

// Single-head scaled dot-product self-attention over a steps x dim sequence.
struct SelfAttention {
  int dim = 0;
  Linear q, k, v;

  struct Trace {
    int steps = 0;
    Vec x;            // steps x dim
    Vec qm, km, vm;   // steps x dim
    Vec attn;         // steps x steps, row softmax
  };

  void init(int dim_in, Rng& rng);
  void forward(const double* x, int steps, Trace* trace, double* y) const;
  void backward(const Trace& trace, const double* dy, double* dx);
  void params(std::vector<Param*>& list);
};

// Adam with bias correction; one shared step counter per optimizer.
struct Adam {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;

  void step(std::span<Param* const> params);
};

void zero_grad(std::span<Param* const> params);

// Flat views over a parameter list, in list order; the weight-file layout.
size_t total_size(std::span<const Param* const> params);
std::vector<float> flatten(std::span<const Param* const> params);
void unflatten(std::span<Param* const> params, std::span<const float> flat);

inline std::vector<const Param*> as_const(const std::vector<Param*>& params) {
  return {params.begin(), params.end()};
}

}  // namespace slpcc::nn

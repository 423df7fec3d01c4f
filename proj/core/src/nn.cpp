#include "slpcc/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace slpcc::nn {

void init_uniform(Param& p, size_t fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(double(fan_in ? fan_in : 1));
  for (double& x : p.w) x = rng.uniform_real(-bound, bound);
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

void Linear::init(int in_dim, int out_dim, Rng& rng) {
  in = in_dim;
  out = out_dim;
  weight.resize(size_t(in) * size_t(out));
  bias.resize(size_t(out));
  init_uniform(weight, size_t(in), rng);
  init_uniform(bias, size_t(in), rng);
}

void Linear::forward(const double* x, double* y) const {
  for (int o = 0; o < out; ++o) {
    const double* row = weight.w.data() + size_t(o) * size_t(in);
    double acc = bias.w[size_t(o)];
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void Linear::backward(const double* x, const double* dy, double* dx) {
  for (int o = 0; o < out; ++o) {
    double d = dy[o];
    if (d == 0.0) continue;
    double* grow = weight.g.data() + size_t(o) * size_t(in);
    const double* wrow = weight.w.data() + size_t(o) * size_t(in);
    bias.g[size_t(o)] += d;
    for (int i = 0; i < in; ++i) {
      grow[i] += d * x[i];
      if (dx) dx[i] += d * wrow[i];
    }
  }
}

void Linear::params(std::vector<Param*>& list) {
  list.push_back(&weight);
  list.push_back(&bias);
}

void Lstm::init(int in_dim, int hidden_dim, Rng& rng) {
  in = in_dim;
  hidden = hidden_dim;
  w.resize(size_t(4 * hidden) * size_t(in));
  u.resize(size_t(4 * hidden) * size_t(hidden));
  b.resize(size_t(4 * hidden));
  init_uniform(w, size_t(in), rng);
  init_uniform(u, size_t(hidden), rng);
  init_uniform(b, size_t(hidden), rng);
}

void Lstm::forward(const double* x, int steps, LstmTrace* trace) const {
  assert(trace);
  const int H = hidden, I = in, G = 4 * H;
  trace->steps = steps;
  trace->x.assign(x, x + size_t(steps) * size_t(I));
  trace->gates.assign(size_t(steps) * size_t(G), 0.0);
  trace->c.assign(size_t(steps) * size_t(H), 0.0);
  trace->h.assign(size_t(steps) * size_t(H), 0.0);

  Vec pre(size_t(G), 0.0);
  for (int t = 0; t < steps; ++t) {
    const double* xt = x + size_t(t) * size_t(I);
    const double* hprev = t > 0 ? trace->h.data() + size_t(t - 1) * size_t(H) : nullptr;
    const double* cprev = t > 0 ? trace->c.data() + size_t(t - 1) * size_t(H) : nullptr;
    for (int g = 0; g < G; ++g) {
      const double* wrow = w.w.data() + size_t(g) * size_t(I);
      double acc = b.w[size_t(g)];
      for (int i = 0; i < I; ++i) acc += wrow[i] * xt[i];
      if (hprev) {
        const double* urow = u.w.data() + size_t(g) * size_t(H);
        for (int j = 0; j < H; ++j) acc += urow[j] * hprev[j];
      }
      pre[size_t(g)] = acc;
    }
    double* gt = trace->gates.data() + size_t(t) * size_t(G);
    double* ct = trace->c.data() + size_t(t) * size_t(H);
    double* ht = trace->h.data() + size_t(t) * size_t(H);
    for (int j = 0; j < H; ++j) {
      double ig = sigmoid(pre[size_t(j)]);
      double fg = sigmoid(pre[size_t(H + j)]);
      double gg = std::tanh(pre[size_t(2 * H + j)]);
      double og = sigmoid(pre[size_t(3 * H + j)]);
      gt[j] = ig;
      gt[H + j] = fg;
      gt[2 * H + j] = gg;
      gt[3 * H + j] = og;
      double c_new = ig * gg + (cprev ? fg * cprev[j] : 0.0);
      ct[j] = c_new;
      ht[j] = og * std::tanh(c_new);
    }
  }
}

void Lstm::backward(const LstmTrace& trace, const double* dh, double* dx) {
  const int H = hidden, I = in, G = 4 * H;
  const int steps = trace.steps;
  Vec dh_acc(size_t(H), 0.0);   // recurrent gradient flowing into step t
  Vec dc(size_t(H), 0.0);       // cell gradient flowing into step t
  Vec dpre(size_t(G), 0.0);

  for (int t = steps - 1; t >= 0; --t) {
    const double* gt = trace.gates.data() + size_t(t) * size_t(G);
    const double* ct = trace.c.data() + size_t(t) * size_t(H);
    const double* cprev = t > 0 ? trace.c.data() + size_t(t - 1) * size_t(H) : nullptr;
    const double* xt = trace.x.data() + size_t(t) * size_t(I);
    const double* hprev = t > 0 ? trace.h.data() + size_t(t - 1) * size_t(H) : nullptr;

    for (int j = 0; j < H; ++j) {
      double dht = dh_acc[size_t(j)] + dh[size_t(t) * size_t(H) + size_t(j)];
      double ig = gt[j], fg = gt[H + j], gg = gt[2 * H + j], og = gt[3 * H + j];
      double tc = std::tanh(ct[j]);
      double dct = dc[size_t(j)] + dht * og * (1.0 - tc * tc);
      double dog = dht * tc;
      double dig = dct * gg;
      double dgg = dct * ig;
      double dfg = cprev ? dct * cprev[j] : 0.0;
      dpre[size_t(j)] = dig * ig * (1.0 - ig);
      dpre[size_t(H + j)] = dfg * fg * (1.0 - fg);
      dpre[size_t(2 * H + j)] = dgg * (1.0 - gg * gg);
      dpre[size_t(3 * H + j)] = dog * og * (1.0 - og);
      dc[size_t(j)] = dct * fg;
    }

    std::fill(dh_acc.begin(), dh_acc.end(), 0.0);
    double* dxt = dx ? dx + size_t(t) * size_t(I) : nullptr;
    for (int g = 0; g < G; ++g) {
      double d = dpre[size_t(g)];
      if (d == 0.0) continue;
      b.g[size_t(g)] += d;
      double* wg = w.g.data() + size_t(g) * size_t(I);
      const double* wrow = w.w.data() + size_t(g) * size_t(I);
      for (int i = 0; i < I; ++i) {
        wg[i] += d * xt[i];
        if (dxt) dxt[i] += d * wrow[i];
      }
      if (hprev) {
        double* ug = u.g.data() + size_t(g) * size_t(H);
        const double* urow = u.w.data() + size_t(g) * size_t(H);
        for (int j = 0; j < H; ++j) {
          ug[j] += d * hprev[j];
          dh_acc[size_t(j)] += d * urow[j];
        }
      }
    }
  }
}

void Lstm::params(std::vector<Param*>& list) {
  list.push_back(&w);
  list.push_back(&u);
  list.push_back(&b);
}

void SelfAttention::init(int dim_in, Rng& rng) {
  dim = dim_in;
  q.init(dim, dim, rng);
  k.init(dim, dim, rng);
  v.init(dim, dim, rng);
}

void SelfAttention::forward(const double* x, int steps, Trace* trace, double* y) const {
  assert(trace);
  const int D = dim;
  const double inv_scale = 1.0 / std::sqrt(double(D));
  trace->steps = steps;
  trace->x.assign(x, x + size_t(steps) * size_t(D));
  trace->qm.assign(size_t(steps) * size_t(D), 0.0);
  trace->km.assign(size_t(steps) * size_t(D), 0.0);
  trace->vm.assign(size_t(steps) * size_t(D), 0.0);
  trace->attn.assign(size_t(steps) * size_t(steps), 0.0);

  for (int t = 0; t < steps; ++t) {
    const double* xt = x + size_t(t) * size_t(D);
    q.forward(xt, trace->qm.data() + size_t(t) * size_t(D));
    k.forward(xt, trace->km.data() + size_t(t) * size_t(D));
    v.forward(xt, trace->vm.data() + size_t(t) * size_t(D));
  }

  Vec scores(size_t(steps), 0.0);
  for (int t = 0; t < steps; ++t) {
    const double* qt = trace->qm.data() + size_t(t) * size_t(D);
    double mx = -1e300;
    for (int s = 0; s < steps; ++s) {
      const double* ks = trace->km.data() + size_t(s) * size_t(D);
      double dot = 0.0;
      for (int d = 0; d < D; ++d) dot += qt[d] * ks[d];
      scores[size_t(s)] = dot * inv_scale;
      if (scores[size_t(s)] > mx) mx = scores[size_t(s)];
    }
    double denom = 0.0;
    double* arow = trace->attn.data() + size_t(t) * size_t(steps);
    for (int s = 0; s < steps; ++s) {
      arow[s] = std::exp(scores[size_t(s)] - mx);
      denom += arow[s];
    }
    double* yt = y + size_t(t) * size_t(D);
    for (int d = 0; d < D; ++d) yt[d] = 0.0;
    for (int s = 0; s < steps; ++s) {
      arow[s] /= denom;
      const double* vs = trace->vm.data() + size_t(s) * size_t(D);
      for (int d = 0; d < D; ++d) yt[d] += arow[s] * vs[d];
    }
  }
}

void SelfAttention::backward(const Trace& trace, const double* dy, double* dx) {
  const int D = dim;
  const int steps = trace.steps;
  const double inv_scale = 1.0 / std::sqrt(double(D));

  Vec dq(size_t(steps) * size_t(D), 0.0);
  Vec dk(size_t(steps) * size_t(D), 0.0);
  Vec dv(size_t(steps) * size_t(D), 0.0);
  Vec da(size_t(steps), 0.0);

  for (int t = 0; t < steps; ++t) {
    const double* dyt = dy + size_t(t) * size_t(D);
    const double* arow = trace.attn.data() + size_t(t) * size_t(steps);
    // dV += a^T dy, da = dy . v
    double inner = 0.0;
    for (int s = 0; s < steps; ++s) {
      const double* vs = trace.vm.data() + size_t(s) * size_t(D);
      double dot = 0.0;
      for (int d = 0; d < D; ++d) {
        dv[size_t(s) * size_t(D) + size_t(d)] += arow[s] * dyt[d];
        dot += dyt[d] * vs[d];
      }
      da[size_t(s)] = dot;
      inner += dot * arow[s];
    }
    // Softmax backward, then score gradients into q and k.
    double* dqt = dq.data() + size_t(t) * size_t(D);
    const double* qt = trace.qm.data() + size_t(t) * size_t(D);
    for (int s = 0; s < steps; ++s) {
      double dscore = arow[s] * (da[size_t(s)] - inner) * inv_scale;
      if (dscore == 0.0) continue;
      const double* ks = trace.km.data() + size_t(s) * size_t(D);
      double* dks = dk.data() + size_t(s) * size_t(D);
      for (int d = 0; d < D; ++d) {
        dqt[d] += dscore * ks[d];
        dks[d] += dscore * qt[d];
      }
    }
  }

  for (int t = 0; t < steps; ++t) {
    const double* xt = trace.x.data() + size_t(t) * size_t(D);
    double* dxt = dx ? dx + size_t(t) * size_t(D) : nullptr;
    q.backward(xt, dq.data() + size_t(t) * size_t(D), dxt);
    k.backward(xt, dk.data() + size_t(t) * size_t(D), dxt);
    v.backward(xt, dv.data() + size_t(t) * size_t(D), dxt);
  }
}

void SelfAttention::params(std::vector<Param*>& list) {
  q.params(list);
  k.params(list);
  v.params(list);
}

void Adam::step(std::span<Param* const> params) {
  ++t;
  double bc1 = 1.0 - std::pow(beta1, double(t));
  double bc2 = 1.0 - std::pow(beta2, double(t));
  for (Param* p : params) {
    for (size_t i = 0; i < p->w.size(); ++i) {
      double g = p->g[i];
      p->m[i] = beta1 * p->m[i] + (1.0 - beta1) * g;
      p->v[i] = beta2 * p->v[i] + (1.0 - beta2) * g * g;
      double mhat = p->m[i] / bc1;
      double vhat = p->v[i] / bc2;
      p->w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void zero_grad(std::span<Param* const> params) {
  for (Param* p : params) std::fill(p->g.begin(), p->g.end(), 0.0);
}

size_t total_size(std::span<const Param* const> params) {
  size_t n = 0;
  for (const Param* p : params) n += p->size();
  return n;
}

std::vector<float> flatten(std::span<const Param* const> params) {
  std::vector<float> flat;
  flat.reserve(total_size(params));
  for (const Param* p : params)
    for (double x : p->w) flat.push_back(float(x));
  return flat;
}

void unflatten(std::span<Param* const> params, std::span<const float> flat) {
  std::vector<const Param*> cview(params.begin(), params.end());
  if (flat.size() != total_size(cview))
    throw std::invalid_argument("nn: weight count mismatch");
  size_t at = 0;
  for (Param* p : params)
    for (double& x : p->w) x = double(flat[at++]);
}

}  // namespace slpcc::nn

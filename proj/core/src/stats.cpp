#include "slpcc/stats.hpp"

#include <array>
#include <cmath>

namespace slpcc {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440084436210484903928;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438186848;
constexpr double kTwoPiD = 6.28318530717958647692528676655900576839;

// Gauss-Legendre nodes/weights on [-1, 1], computed once by Newton iteration
// on the Legendre recurrence.
template <int N>
struct GaussLegendre {
  std::array<double, N> node{}, weight{};
  GaussLegendre() {
    for (int i = 0; i < N; ++i) {
      double x = std::cos(3.14159265358979323846 * (double(i) + 0.75) / (double(N) + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 64; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= N; ++k) {
          double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / double(k);
          p0 = p1;
          p1 = p2;
        }
        dp = double(N) * (x * p1 - p0) / (x * x - 1.0);
        double dx = p1 / dp;
        x -= dx;
        if (std::fabs(dx) < 1e-15) break;
      }
      node[size_t(i)] = x;
      weight[size_t(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

// T(h, a) for 0 <= a <= 1 by quadrature of the defining integral.
double owen_t_core(double h, double a) {
  static const GaussLegendre<24> gl;
  double hh = -0.5 * h * h;
  double sum = 0.0;
  for (int i = 0; i < 24; ++i) {
    double x = 0.5 * a * (gl.node[size_t(i)] + 1.0);
    double x2 = x * x;
    sum += gl.weight[size_t(i)] * std::exp(hh * (1.0 + x2)) / (1.0 + x2);
  }
  return sum * 0.5 * a / kTwoPiD;
}

}  // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double owen_t(double h, double a) {
  // T is even in h and odd in a.
  double sign = 1.0;
  if (a < 0.0) {
    a = -a;
    sign = -1.0;
  }
  h = std::fabs(h);
  if (a == 0.0 || std::isinf(h)) return 0.0;
  if (a <= 1.0) return sign * owen_t_core(h, a);
  // Reflection: T(h, a) = Phi(h)/2 + Phi(ah)/2 - Phi(h)Phi(ah) - T(ah, 1/a).
  // Limit a -> inf: wedge up to the vertical axis, T(h, inf) = (1 - Phi(h))/2.
  if (std::isinf(a)) return sign * 0.5 * normal_cdf(-h);
  double ph = normal_cdf(h), pah = normal_cdf(a * h);
  return sign * (0.5 * (ph + pah) - ph * pah - owen_t_core(a * h, 1.0 / a));
}

double skew_normal_pdf(double x, const SkewNormalParams& p) {
  double z = (x - p.mu) / p.sigma;
  return 2.0 / p.sigma * normal_pdf(z) * normal_cdf(p.alpha * z);
}

double skew_normal_cdf(double x, const SkewNormalParams& p) {
  double z = (x - p.mu) / p.sigma;
  return normal_cdf(z) - 2.0 * owen_t(z, p.alpha);
}

BinProb normal_bin(double k, const NormalParams& p) {
  double z_lo = (k - 0.5 - p.mu) / p.sigma;
  double z_hi = (k + 0.5 - p.mu) / p.sigma;
  BinProb out;
  // Difference of matching tails keeps precision away from the mode.
  if (z_lo >= 0.0)
    out.p = 0.5 * (std::erfc(z_lo * kInvSqrt2) - std::erfc(z_hi * kInvSqrt2));
  else if (z_hi <= 0.0)
    out.p = 0.5 * (std::erfc(-z_hi * kInvSqrt2) - std::erfc(-z_lo * kInvSqrt2));
  else
    out.p = normal_cdf(z_hi) - normal_cdf(z_lo);
  if (out.p < 0.0) out.p = 0.0;
  double f_lo = normal_pdf(z_lo), f_hi = normal_pdf(z_hi);
  out.d_mu = (f_lo - f_hi) / p.sigma;
  out.d_sigma = (z_lo * f_lo - z_hi * f_hi) / p.sigma;
  return out;
}

BinProb skew_normal_bin(double k, const SkewNormalParams& p) {
  double z_lo = (k - 0.5 - p.mu) / p.sigma;
  double z_hi = (k + 0.5 - p.mu) / p.sigma;
  BinProb out;
  out.p = skew_normal_cdf(k + 0.5, p) - skew_normal_cdf(k - 0.5, p);
  if (out.p < 0.0) out.p = 0.0;
  // dF/dmu = -pdf, dF/dsigma = -z*pdf, dF/dalpha = -2 dT/da at z.
  double f_lo = 2.0 * normal_pdf(z_lo) * normal_cdf(p.alpha * z_lo) / p.sigma;
  double f_hi = 2.0 * normal_pdf(z_hi) * normal_cdf(p.alpha * z_hi) / p.sigma;
  out.d_mu = f_lo - f_hi;
  out.d_sigma = z_lo * f_lo - z_hi * f_hi;
  double a2 = 1.0 + p.alpha * p.alpha;
  auto dt_da = [a2](double h) { return std::exp(-0.5 * h * h * a2) / (kTwoPiD * a2); };
  out.d_alpha = -2.0 * (dt_da(z_hi) - dt_da(z_lo));
  return out;
}

}  // namespace slpcc

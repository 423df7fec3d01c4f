#pragma once

namespace slpcc {

// Standard normal density and distribution function (erfc-based, accurate in
// both tails).
double normal_pdf(double x);
double normal_cdf(double x);

// Owen's T function T(h, a): probability mass of the standard bivariate
// normal over the wedge between the x-axis and the line y = a*x, used by the
// skew-normal CDF. Evaluated by Gauss-Legendre quadrature after reducing
// |a| <= 1 via the reflection identity.
double owen_t(double h, double a);

struct NormalParams {
  double mu = 0.0;
  double sigma = 1.0;  // > 0
};

// Skew-normal with location mu, scale sigma, shape alpha:
// pdf(x) = (2/sigma) * phi(z) * Phi(alpha*z), z = (x - mu)/sigma.
// alpha = 0 recovers the normal distribution exactly.
struct SkewNormalParams {
  double mu = 0.0;
  double sigma = 1.0;  // > 0
  double alpha = 0.0;
};

double skew_normal_pdf(double x, const SkewNormalParams& p);

// CDF via Phi(z) - 2*T(z, alpha).
double skew_normal_cdf(double x, const SkewNormalParams& p);

// Probability of the unit bin [k-1/2, k+1/2] with its closed-form parameter
// gradients; the training path for the entropy-model heads.
struct BinProb {
  double p = 0.0;
  double d_mu = 0.0;
  double d_sigma = 0.0;
  double d_alpha = 0.0;  // zero for the normal family
};

BinProb normal_bin(double k, const NormalParams& p);
BinProb skew_normal_bin(double k, const SkewNormalParams& p);

}  // namespace slpcc

#pragma once

#include <span>
#include <vector>

#include "slpcc/sensor.hpp"

namespace slpcc {

// Distortion of identical clouds is reported as this sentinel instead of an
// infinite PSNR.
inline constexpr double kPsnrSentinel = 999.0;

// Point-to-point PSNR: the larger of the two directional mean squared
// nearest-neighbor distances, mapped through 10*log10(3*peak^2 / mse).
// Throws std::invalid_argument on an empty cloud or peak <= 0.
double d1_psnr(std::span<const Vec3> reference, std::span<const Vec3> reconstructed, double peak);

// Point-to-plane PSNR: squared errors are projected onto unit normals
// estimated on the reference cloud (plane fit through each reference point's
// 9 nearest neighbors). Points whose reference-side neighborhood is too
// degenerate for a plane fit keep their point-to-point distance, so the
// point-to-plane MSE never exceeds the point-to-point MSE.
double d2_psnr(std::span<const Vec3> reference, std::span<const Vec3> reconstructed, double peak);

// Mean of the two directional average (unsquared) nearest-neighbor distances.
double chamfer(std::span<const Vec3> reference, std::span<const Vec3> reconstructed);

// Per-reference-point unit normals from a plane fit through each point's
// k nearest neighbors; (0,0,0) marks a degenerate neighborhood. Exposed for
// the point-to-plane metric's oracle tests.
std::vector<Vec3> estimate_normals(std::span<const Vec3> cloud, size_t k);

// Deterministic order-independent reduction used by all metrics.
double pairwise_sum(std::span<const double> values);

// One operating point of a codec configuration on one sequence.
struct RatePsnr {
  double rate = 0.0;  // bits per input point
  double psnr = 0.0;  // dB
};

// Monotone piecewise-cubic interpolant (Fritsch–Carlson derivative limiting,
// matching scipy's PchipInterpolator). Requires strictly increasing x and at
// least two knots.
class MonotoneCubic {
 public:
  MonotoneCubic(std::span<const double> x, std::span<const double> y);

  double operator()(double x) const;          // clamped to the knot range
  double integrate(double lo, double hi) const;  // analytic, lo <= hi, in range
  double x_front() const { return x_.front(); }
  double x_back() const { return x_.back(); }

 private:
  std::vector<double> x_, y_, d_;  // knots and endpoint derivatives
};

// Average log-rate difference of curve A against curve B over their common
// PSNR interval, in percent; negative means A spends fewer bits for the same
// quality. Each curve needs >= 4 points with strictly increasing rate and
// PSNR; throws std::invalid_argument when the PSNR ranges do not overlap.
double bd_rate(std::span<const RatePsnr> a, std::span<const RatePsnr> b);

}  // namespace slpcc

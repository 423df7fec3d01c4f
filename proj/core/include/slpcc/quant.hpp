#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace slpcc {

// Per-axis quantization steps for one operating point. Larger is finer:
// azimuth unit angle = azimuth_resolution / q_phi, and radius/elevation
// residuals are coded at 1/q granularity.
struct QuantTuple {
  int32_t q_phi = 1;    // [1, 16]
  int32_t q_theta = 1;  // [1, 256]
  int32_t q_r = 1;      // [1, 256]

  bool operator==(const QuantTuple&) const = default;
};

// Validates the DE search ranges above; throws std::invalid_argument.
void validate(const QuantTuple& q);

// Round-half-to-even, the rounding used everywhere in the codec. Relies on
// the default FE_TONEAREST rounding mode.
inline double round_even(double x) { return std::nearbyint(x); }

// Unit angle phi_ar / q_phi.
double phi_unit(double azimuth_resolution, int32_t q_phi);

// A point's azimuth as an integer slope plus its delta to the previous
// point's slope; delta(0) is relative to slope 0.
struct AzimuthCode {
  int32_t slope = 0;
  int32_t delta = 0;
};

// Slopes s_i = round_even(phi_i / unit) and first-order deltas.
std::vector<AzimuthCode> azimuth_encode(std::span<const double> phis, double unit);

// Inverse mapping: unit * slope (unwrapped).
double azimuth_reconstruct(int32_t slope, double unit);

// Residual quantization at granularity 1/q: code = round_even(res * q).
int32_t quantize_residual(double res, double q);
double dequantize_residual(int32_t code, double q);

}  // namespace slpcc

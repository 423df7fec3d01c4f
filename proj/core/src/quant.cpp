#include "slpcc/quant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace slpcc {

void validate(const QuantTuple& q) {
  auto bad = [](const char* name, int32_t v, int32_t hi) {
    throw std::invalid_argument(std::string("quant tuple: ") + name + "=" +
                                std::to_string(v) + " outside [1, " + std::to_string(hi) + "]");
  };
  if (q.q_phi < 1 || q.q_phi > 16) bad("q_phi", q.q_phi, 16);
  if (q.q_theta < 1 || q.q_theta > 256) bad("q_theta", q.q_theta, 256);
  if (q.q_r < 1 || q.q_r > 256) bad("q_r", q.q_r, 256);
}

double phi_unit(double azimuth_resolution, int32_t q_phi) {
  if (azimuth_resolution <= 0.0 || q_phi < 1)
    throw std::invalid_argument("phi_unit: need positive resolution and q_phi >= 1");
  return azimuth_resolution / double(q_phi);
}

std::vector<AzimuthCode> azimuth_encode(std::span<const double> phis, double unit) {
  std::vector<AzimuthCode> out(phis.size());
  int32_t prev = 0;
  for (size_t i = 0; i < phis.size(); ++i) {
    double s = round_even(phis[i] / unit);
    if (std::fabs(s) > 2147483647.0)
      throw std::invalid_argument("azimuth_encode: slope overflows 32 bits");
    int32_t slope = int32_t(s);
    out[i] = AzimuthCode{slope, slope - prev};
    prev = slope;
  }
  return out;
}

double azimuth_reconstruct(int32_t slope, double unit) { return unit * double(slope); }

int32_t quantize_residual(double res, double q) {
  double code = round_even(res * q);
  if (std::fabs(code) > 2147483647.0)
    throw std::invalid_argument("quantize_residual: code overflows 32 bits");
  return int32_t(code);
}

double dequantize_residual(int32_t code, double q) { return double(code) / q; }

}  // namespace slpcc

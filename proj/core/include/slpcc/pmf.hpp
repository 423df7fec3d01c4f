#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slpcc/stats.hpp"

namespace slpcc {

// Discretized residual distribution over the integer support [lo, hi] plus a
// trailing escape symbol. Frequencies are 16-bit-total integers: every
// in-support bin and the escape symbol hold freq >= 1 (probability floor
// 2^-16) and all frequencies sum to exactly 2^16, so probabilities are exact
// dyadic rationals. Bins far from the model mean are held at the floor
// implicitly; only an "active" window around the mean stores explicit
// frequencies.
class Pmf {
public:
  static constexpr uint32_t kTotal = 1u << 16;
  static constexpr int32_t kMaxWidth = 4096;  // widest representable support
  static constexpr double kEscapePayloadBits = 32.0;

  // Support [lo, hi] clipped to kMaxWidth bins (hi moves down). Frequencies
  // concentrate within ~8 sigma of mu; sigma is floored at 1e-4.
  static Pmf normal(const NormalParams& p, int32_t lo, int32_t hi);
  static Pmf skew_normal(const SkewNormalParams& p, int32_t lo, int32_t hi);

  // Explicit distribution over [lo, lo + probs.size() - 1]; probabilities and
  // escape mass must sum to 1 and be representable (used by tests and the
  // escape payload's flat byte model).
  static Pmf explicit_probs(int32_t lo, std::span<const double> probs, double escape_mass);

  int32_t lo() const { return lo_; }
  int32_t hi() const { return hi_; }
  bool in_support(int32_t v) const { return v >= lo_ && v <= hi_; }

  uint32_t freq(int32_t v) const;        // in-support bin frequency
  uint32_t cum(int32_t v) const;         // total frequency of bins before v
  uint32_t escape_freq() const { return escape_freq_; }
  uint32_t escape_cum() const { return kTotal - escape_freq_; }

  // Inverse lookup for the decoder: maps a cumulative offset in [0, 2^16) to
  // the bin containing it; offsets at escape_cum() and beyond mean escape
  // (returned through the `escape` flag).
  int32_t symbol_at(uint32_t offset, bool* escape) const;

  double prob(int32_t v) const { return double(freq(v)) / double(kTotal); }
  double escape_mass() const { return double(escape_freq_) / double(kTotal); }

  // Ideal code length of one value in bits: -log2(freq/total) in support,
  // escape cost plus the 32-bit flat payload otherwise.
  double bits(int32_t v) const;

private:
  static Pmf build(int32_t lo, int32_t hi, double mu, double sigma,
                   double (*cdf)(double, const void*), const void* ctx);

  int32_t lo_ = 0, hi_ = 0;
  int32_t active_lo_ = 0, active_hi_ = -1;  // explicit-frequency window
  std::vector<uint32_t> freq_;              // active bins
  std::vector<uint32_t> cum_;               // prefix sums over active bins
  uint32_t escape_freq_ = 0;
};

// Exact ideal code length in bits of a residual stream, symbol i measured
// against pmfs[i].
double nll_bits(std::span<const int32_t> residuals, std::span<const Pmf> pmfs);

}  // namespace slpcc

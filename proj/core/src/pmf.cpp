#include "slpcc/pmf.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace slpcc {

namespace {

double normal_cdf_thunk(double x, const void* ctx) {
  const auto* p = static_cast<const NormalParams*>(ctx);
  return normal_cdf((x - p->mu) / p->sigma);
}

double skew_cdf_thunk(double x, const void* ctx) {
  return skew_normal_cdf(x, *static_cast<const SkewNormalParams*>(ctx));
}

}  // namespace

Pmf Pmf::build(int32_t lo, int32_t hi, double mu, double sigma,
               double (*cdf)(double, const void*), const void* ctx) {
  if (lo > hi) throw std::invalid_argument("pmf: empty support");
  if (int64_t(hi) - int64_t(lo) + 1 > kMaxWidth) hi = lo + kMaxWidth - 1;

  Pmf pmf;
  pmf.lo_ = lo;
  pmf.hi_ = hi;

  const int64_t width = int64_t(hi) - int64_t(lo) + 1;
  const uint32_t budget = kTotal - uint32_t(width) - 1;  // 1 floor per bin + escape

  // Explicit frequencies only where the model puts non-floor mass.
  sigma = std::clamp(sigma, 1e-4, 1024.0);
  int64_t center = std::llround(std::clamp(mu, double(lo), double(hi)));
  int64_t half = std::min<int64_t>(int64_t(8.0 * sigma) + 2, kMaxWidth);
  pmf.active_lo_ = int32_t(std::max<int64_t>(lo, center - half));
  pmf.active_hi_ = int32_t(std::min<int64_t>(hi, center + half));

  const size_t active_n = size_t(pmf.active_hi_ - pmf.active_lo_ + 1);
  pmf.freq_.resize(active_n);
  double mass = 0.0;
  double cdf_prev = cdf(double(pmf.active_lo_) - 0.5, ctx);
  std::vector<double> probs(active_n);
  for (size_t i = 0; i < active_n; ++i) {
    double cdf_next = cdf(double(pmf.active_lo_) + double(i) + 0.5, ctx);
    probs[i] = std::max(0.0, cdf_next - cdf_prev);
    cdf_prev = cdf_next;
    mass += probs[i];
  }
  double escape_mass = std::max(0.0, 1.0 - mass);

  uint64_t total = uint64_t(width - int64_t(active_n));  // implicit floor bins
  for (size_t i = 0; i < active_n; ++i) {
    pmf.freq_[i] = 1 + uint32_t(probs[i] * double(budget));
    total += pmf.freq_[i];
  }
  pmf.escape_freq_ = 1 + uint32_t(escape_mass * double(budget));
  total += pmf.escape_freq_;

  // Rounding slack is at most a few units per active bin; spread it.
  int64_t rem = int64_t(kTotal) - int64_t(total);
  size_t i = 0;
  while (rem > 0) {
    pmf.freq_[i % active_n]++;
    ++i;
    --rem;
  }
  while (rem < 0) {
    size_t j = i % active_n;
    if (pmf.freq_[j] > 1) {
      pmf.freq_[j]--;
      ++rem;
    }
    ++i;
  }

  pmf.cum_.resize(active_n + 1);
  pmf.cum_[0] = 0;
  for (size_t k = 0; k < active_n; ++k) pmf.cum_[k + 1] = pmf.cum_[k] + pmf.freq_[k];
  return pmf;
}

Pmf Pmf::normal(const NormalParams& p, int32_t lo, int32_t hi) {
  NormalParams q{p.mu, std::max(p.sigma, 1e-4)};
  return build(lo, hi, q.mu, q.sigma, &normal_cdf_thunk, &q);
}

Pmf Pmf::skew_normal(const SkewNormalParams& p, int32_t lo, int32_t hi) {
  SkewNormalParams q{p.mu, std::max(p.sigma, 1e-4), p.alpha};
  return build(lo, hi, q.mu, q.sigma, &skew_cdf_thunk, &q);
}

Pmf Pmf::explicit_probs(int32_t lo, std::span<const double> probs, double escape_mass) {
  if (probs.empty() || int64_t(probs.size()) > kMaxWidth)
    throw std::invalid_argument("pmf: bad explicit support width");
  double sum = escape_mass;
  for (double p : probs) {
    if (p < 0.0 || escape_mass < 0.0) throw std::invalid_argument("pmf: negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("pmf: probabilities must sum to 1");

  Pmf pmf;
  pmf.lo_ = lo;
  pmf.hi_ = lo + int32_t(probs.size()) - 1;
  pmf.active_lo_ = pmf.lo_;
  pmf.active_hi_ = pmf.hi_;

  const bool has_escape = escape_mass > 0.0;
  const uint32_t budget = kTotal - uint32_t(probs.size()) - (has_escape ? 1 : 0);
  uint64_t total = 0;
  pmf.freq_.resize(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    pmf.freq_[i] = 1 + uint32_t(probs[i] * double(budget));
    total += pmf.freq_[i];
  }
  pmf.escape_freq_ = has_escape ? 1 + uint32_t(escape_mass * double(budget)) : 0;
  total += pmf.escape_freq_;

  int64_t rem = int64_t(kTotal) - int64_t(total);
  size_t i = 0;
  while (rem > 0) {
    pmf.freq_[i % pmf.freq_.size()]++;
    ++i;
    --rem;
  }
  while (rem < 0) {
    size_t j = i % pmf.freq_.size();
    if (pmf.freq_[j] > 1) {
      pmf.freq_[j]--;
      ++rem;
    }
    ++i;
  }

  pmf.cum_.resize(pmf.freq_.size() + 1);
  pmf.cum_[0] = 0;
  for (size_t k = 0; k < pmf.freq_.size(); ++k) pmf.cum_[k + 1] = pmf.cum_[k] + pmf.freq_[k];
  return pmf;
}

uint32_t Pmf::freq(int32_t v) const {
  assert(in_support(v));
  if (v < active_lo_ || v > active_hi_) return 1;
  return freq_[size_t(v - active_lo_)];
}

uint32_t Pmf::cum(int32_t v) const {
  assert(in_support(v));
  if (v <= active_lo_) return uint32_t(v - lo_);
  uint32_t pre = uint32_t(active_lo_ - lo_);
  if (v <= active_hi_ + 1 && v >= active_lo_) return pre + cum_[size_t(v - active_lo_)];
  return pre + cum_.back() + uint32_t(v - active_hi_ - 1);
}

int32_t Pmf::symbol_at(uint32_t offset, bool* escape) const {
  *escape = false;
  if (offset >= escape_cum() && escape_freq_ > 0) {
    *escape = true;
    return 0;
  }
  uint32_t pre = uint32_t(active_lo_ - lo_);
  if (offset < pre) return lo_ + int32_t(offset);
  uint32_t off_active = offset - pre;
  if (off_active < cum_.back()) {
    auto it = std::upper_bound(cum_.begin(), cum_.end(), off_active);
    return active_lo_ + int32_t(it - cum_.begin()) - 1;
  }
  return active_hi_ + 1 + int32_t(off_active - cum_.back());
}

double Pmf::bits(int32_t v) const {
  if (in_support(v)) return -std::log2(double(freq(v)) / double(kTotal));
  if (escape_freq_ == 0) return std::numeric_limits<double>::infinity();
  return -std::log2(escape_mass()) + kEscapePayloadBits;
}

double nll_bits(std::span<const int32_t> residuals, std::span<const Pmf> pmfs) {
  if (residuals.size() != pmfs.size())
    throw std::invalid_argument("nll_bits: one pmf per residual required");
  double bits = 0.0;
  for (size_t i = 0; i < residuals.size(); ++i) bits += pmfs[i].bits(residuals[i]);
  return bits;
}

}  // namespace slpcc

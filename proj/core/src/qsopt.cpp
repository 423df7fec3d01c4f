#include "slpcc/qsopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <utility>

namespace slpcc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct AxisRange {
  int32_t lo;
  int32_t hi;
};

// Valid quantization steps per axis, matching quant's validation.
constexpr AxisRange kRanges[3] = {{1, 16}, {1, 256}, {1, 256}};

int32_t clamp_gene(size_t axis, double v) {
  const AxisRange r = kRanges[axis % 3];
  return int32_t(std::clamp(v, double(r.lo), double(r.hi)));
}

std::array<int32_t, QSet::kGenes> genes_of(const QSet& q) {
  std::array<int32_t, QSet::kGenes> g{};
  for (size_t i = 0; i < QSet::kGenes; ++i) g[i] = q.gene(i);
  return g;
}

// Uniform per gene, then each axis sorted so the tuples are non-decreasing
// across operating points (operating points are ordered by rate).
QSet sample_individual(Rng& rng) {
  QSet q;
  for (size_t axis = 0; axis < 3; ++axis) {
    std::array<int32_t, QSet::kPoints> v{};
    for (auto& g : v) g = int32_t(rng.uniform_int(kRanges[axis].lo, kRanges[axis].hi));
    std::sort(v.begin(), v.end());
    for (size_t p = 0; p < QSet::kPoints; ++p) q.set_gene(p * 3 + axis, v[p]);
  }
  return q;
}

double sanitize_fitness(double f) { return std::isnan(f) ? kInf : f; }

}  // namespace

int32_t QSet::gene(size_t i) const {
  const QuantTuple& t = tuples[i / 3];
  switch (i % 3) {
    case 0: return t.q_phi;
    case 1: return t.q_theta;
    default: return t.q_r;
  }
}

void QSet::set_gene(size_t i, int32_t value) {
  QuantTuple& t = tuples[i / 3];
  switch (i % 3) {
    case 0: t.q_phi = value; break;
    case 1: t.q_theta = value; break;
    default: t.q_r = value; break;
  }
}

QSet clamp_to_ranges(QSet q) {
  for (size_t i = 0; i < QSet::kGenes; ++i) q.set_gene(i, clamp_gene(i, double(q.gene(i))));
  return q;
}

QSet default_qset() {
  QSet q;
  constexpr int32_t phi[QSet::kPoints] = {1, 2, 2, 4, 8, 8};
  constexpr int32_t theta[QSet::kPoints] = {2, 3, 4, 15, 33, 61};
  constexpr int32_t r[QSet::kPoints] = {9, 18, 34, 66, 121, 172};
  for (size_t i = 0; i < QSet::kPoints; ++i) q.tuples[i] = {phi[i], theta[i], r[i]};
  return q;
}

BitrateConstraints BitrateConstraints::semantic_kitti() {
  return {{{{2.8, 3.0}, {3.5, 3.8}, {4.4, 4.8}, {5.2, 5.6}, {6.8, 7.2}, {8.8, 9.2}}}};
}

BitrateConstraints BitrateConstraints::ford() {
  return {{{{3.0, 3.2}, {4.0, 4.3}, {5.0, 5.3}, {5.8, 6.2}, {7.2, 7.6}, {9.0, 9.4}}}};
}

void validate(const BitrateConstraints& constraints) {
  for (size_t i = 0; i < QSet::kPoints; ++i) {
    const auto& w = constraints.intervals[i];
    if (!std::isfinite(w.lo) || !std::isfinite(w.hi) || !(w.lo < w.hi))
      throw std::invalid_argument("qsopt: bitrate window must satisfy lo < hi");
    if (i > 0) {
      const auto& prev = constraints.intervals[i - 1];
      if (!(w.lo > prev.lo && w.hi > prev.hi))
        throw std::invalid_argument("qsopt: bitrate windows must increase across operating points");
    }
  }
}

QSet de_mutate(const QSet& base, const QSet& a, const QSet& b, double mu) {
  QSet out;
  for (size_t i = 0; i < QSet::kGenes; ++i) {
    const double v = double(base.gene(i)) + mu * (double(a.gene(i)) - double(b.gene(i)));
    out.set_gene(i, clamp_gene(i, round_even(v)));
  }
  return out;
}

QSet de_crossover(const QSet& target, const QSet& mutant, double cr, Rng& rng) {
  const size_t forced = size_t(rng.uniform_int(0, int64_t(QSet::kGenes) - 1));
  QSet out;
  for (size_t i = 0; i < QSet::kGenes; ++i) {
    const bool from_mutant = rng.uniform() < cr || i == forced;
    out.set_gene(i, from_mutant ? mutant.gene(i) : target.gene(i));
  }
  return out;
}

bool de_accepts_trial(double target_fitness, double trial_fitness) {
  return trial_fitness < target_fitness;
}

std::string format_trace(std::span<const GenerationTrace> trace) {
  std::string out;
  char buf[64];
  for (const auto& g : trace) {
    out += "gen ";
    out += std::to_string(g.generation);
    std::snprintf(buf, sizeof buf, " fitness %a genes", g.best_fitness);
    out += buf;
    for (size_t i = 0; i < QSet::kGenes; ++i) {
      out += ' ';
      out += std::to_string(g.best.gene(i));
    }
    out += '\n';
  }
  return out;
}

OptimizeResult optimize_de(const std::function<double(const QSet&)>& fitness,
                           const OptimizerConfig& cfg) {
  if (cfg.population < 3)
    throw std::invalid_argument("qsopt: population must be at least 3");
  if (cfg.iterations < 0) throw std::invalid_argument("qsopt: iterations must be non-negative");
  if (!(cfg.mu > 0.0) || !std::isfinite(cfg.mu))
    throw std::invalid_argument("qsopt: mu must be positive");
  if (!(cfg.cr >= 0.0 && cfg.cr <= 1.0))
    throw std::invalid_argument("qsopt: cr must be in [0, 1]");
  if (cfg.init_retries < 0)
    throw std::invalid_argument("qsopt: init_retries must be non-negative");

  const size_t k = size_t(cfg.population);
  Rng rng(cfg.seed);
  OptimizeResult result;

  std::vector<QSet> pop(k);
  std::vector<double> fit(k, kInf);
  bool feasible = false;
  for (int attempt = 0; attempt <= cfg.init_retries && !feasible; ++attempt) {
    for (size_t j = 0; j < k; ++j) {
      pop[j] = sample_individual(rng);
      fit[j] = sanitize_fitness(fitness(pop[j]));
      ++result.fitness_calls;
      feasible = feasible || std::isfinite(fit[j]);
    }
  }
  if (!feasible)
    throw std::runtime_error("qsopt: every individual was infeasible in " +
                             std::to_string(cfg.init_retries + 1) + " initialization attempts");

  const auto record = [&](int generation) {
    const size_t best = size_t(std::min_element(fit.begin(), fit.end()) - fit.begin());
    result.trace.push_back({generation, fit[best], pop[best]});
  };
  record(0);

  std::vector<QSet> next_pop(k);
  std::vector<double> next_fit(k);
  for (int t = 1; t <= cfg.iterations; ++t) {
    for (size_t j = 0; j < k; ++j) {
      size_t donor_a = j, donor_b = j;
      while (donor_a == j) donor_a = size_t(rng.uniform_int(0, int64_t(k) - 1));
      while (donor_b == j || donor_b == donor_a)
        donor_b = size_t(rng.uniform_int(0, int64_t(k) - 1));
      const QSet mutant = de_mutate(pop[j], pop[donor_a], pop[donor_b], cfg.mu);
      const QSet trial = de_crossover(pop[j], mutant, cfg.cr, rng);
      const double trial_fit = sanitize_fitness(fitness(trial));
      ++result.fitness_calls;
      if (de_accepts_trial(fit[j], trial_fit)) {
        next_pop[j] = trial;
        next_fit[j] = trial_fit;
      } else {
        next_pop[j] = pop[j];
        next_fit[j] = fit[j];
      }
    }
    pop.swap(next_pop);
    fit.swap(next_fit);
    record(t);
  }

  result.best = result.trace.back().best;
  result.best_fitness = result.trace.back().best_fitness;
  return result;
}

double qset_fitness(const QSet& q, const QSet& reference, const RdEvaluator& rd,
                    size_t cloud_count, const BitrateConstraints& constraints,
                    std::string* why) {
  validate(constraints);
  if (cloud_count == 0) throw std::invalid_argument("qsopt: fitness needs at least one cloud");
  for (const QuantTuple& t : q.tuples) validate(t);
  for (const QuantTuple& t : reference.tuples) validate(t);
  if (why) why->clear();

  try {
    for (size_t i = 0; i < QSet::kPoints; ++i) {
      double sum = 0.0;
      for (size_t n = 0; n < cloud_count; ++n) sum += rd(q.tuples[i], n).rate;
      const double mean = sum / double(cloud_count);
      const auto& w = constraints.intervals[i];
      if (!(mean >= w.lo && mean <= w.hi)) {
        if (why) {
          char buf[128];
          std::snprintf(buf, sizeof buf,
                        "operating point %zu mean bitrate %.6g outside [%.6g, %.6g]", i + 1, mean,
                        w.lo, w.hi);
          *why = buf;
        }
        return kInf;
      }
    }

    double total = 0.0;
    for (size_t n = 0; n < cloud_count; ++n) {
      std::array<RatePsnr, QSet::kPoints> candidate{}, ref{};
      for (size_t i = 0; i < QSet::kPoints; ++i) {
        candidate[i] = rd(q.tuples[i], n);
        ref[i] = rd(reference.tuples[i], n);
      }
      total += bd_rate(candidate, ref);
    }
    if (!std::isfinite(total)) {
      if (why) *why = "non-finite rate-distortion sum";
      return kInf;
    }
    return total;
  } catch (const std::exception& e) {
    if (why) *why = e.what();
    return kInf;
  }
}

FitnessCache::FitnessCache(RdEvaluator rd, size_t cloud_count, BitrateConstraints constraints,
                           QSet reference)
    : rd_(std::move(rd)),
      cloud_count_(cloud_count),
      constraints_(constraints),
      reference_(reference) {
  validate(constraints_);
  if (cloud_count_ == 0) throw std::invalid_argument("qsopt: fitness needs at least one cloud");
  if (!rd_) throw std::invalid_argument("qsopt: evaluator must be callable");
}

double FitnessCache::operator()(const QSet& q) {
  const auto key = genes_of(q);
  if (auto it = scores_.find(key); it != scores_.end()) return it->second;
  const RdEvaluator cached = [this](const QuantTuple& t, size_t n) {
    const std::array<int64_t, 4> pk{t.q_phi, t.q_theta, t.q_r, int64_t(n)};
    if (auto it = points_.find(pk); it != points_.end()) return it->second;
    ++rd_calls_;
    const RatePsnr p = rd_(t, n);
    points_.emplace(pk, p);
    return p;
  };
  const double f = qset_fitness(q, reference_, cached, cloud_count_, constraints_, nullptr);
  scores_.emplace(key, f);
  return f;
}

OptimizeResult optimize_qs(const RdEvaluator& rd, size_t cloud_count,
                           const BitrateConstraints& constraints, const QSet& reference,
                           const OptimizerConfig& cfg) {
  FitnessCache cache(rd, cloud_count, constraints, reference);
  return optimize_de([&cache](const QSet& q) { return cache(q); }, cfg);
}

}  // namespace slpcc

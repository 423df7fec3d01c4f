#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "slpcc/metrics.hpp"
#include "slpcc/quant.hpp"
#include "slpcc/rng.hpp"

namespace slpcc {

// Six quantization tuples, one per operating point, lowest bitrate first.
struct QSet {
  static constexpr size_t kPoints = 6;
  static constexpr size_t kGenes = kPoints * 3;

  std::array<QuantTuple, kPoints> tuples{};

  // Flattened integer view used by the optimizer: gene i addresses
  // tuples[i / 3], axis i % 3 in (q_phi, q_theta, q_r) order.
  int32_t gene(size_t i) const;
  void set_gene(size_t i, int32_t value);

  bool operator==(const QSet&) const = default;
};

// Clamps every axis to the codec's valid quantization ranges.
QSet clamp_to_ranges(QSet q);

// The operating points shipped with the codec, lowest to highest bitrate.
QSet default_qset();

// Feasible mean-bitrate windows in bits per input point, one per operating
// point. Each window must be non-empty and both endpoints must increase
// strictly across operating points.
struct BitrateConstraints {
  struct Interval {
    double lo = 0.0;
    double hi = 0.0;
  };
  std::array<Interval, QSet::kPoints> intervals{};

  static BitrateConstraints semantic_kitti();
  static BitrateConstraints ford();
};

// Throws std::invalid_argument when a window is empty, non-finite, or out of
// order.
void validate(const BitrateConstraints& constraints);

// Rate/quality of one quantization tuple on one cloud. Implementations must
// be deterministic; a thrown exception marks the calling QSet infeasible.
using RdEvaluator = std::function<RatePsnr(const QuantTuple&, size_t cloud_index)>;

struct OptimizerConfig {
  int population = 20;    // individuals per generation
  int iterations = 50;    // generations after initialization
  double mu = 0.4;        // difference-vector scale
  double cr = 0.9;        // per-gene crossover probability
  uint64_t seed = 1;
  int init_retries = 10;  // extra initialization attempts before giving up
};

// Differential-evolution primitives, exposed for direct testing.
//
// Mutant = base + mu * (a - b) per gene, rounded to the nearest integer
// (ties to even) and clamped to the valid ranges.
QSet de_mutate(const QSet& base, const QSet& a, const QSet& b, double mu);
// Binomial crossover: each gene comes from the mutant with probability cr,
// and one uniformly drawn gene always does. Consumes one integer draw plus
// one uniform draw per gene, so seeded runs reproduce exactly.
QSet de_crossover(const QSet& target, const QSet& mutant, double cr, Rng& rng);
// Greedy selection: the trial replaces the target only when strictly better;
// ties and NaN keep the target.
bool de_accepts_trial(double target_fitness, double trial_fitness);

struct GenerationTrace {
  int generation = 0;  // 0 is the initialization
  double best_fitness = 0.0;
  QSet best{};
};

struct OptimizeResult {
  QSet best{};
  double best_fitness = 0.0;
  std::vector<GenerationTrace> trace;  // one entry per generation, oldest first
  size_t fitness_calls = 0;
};

// Exact text form of a trace (hex floats), for logs and byte-identical
// reproducibility checks.
std::string format_trace(std::span<const GenerationTrace> trace);

// Core DE loop over integer QSets (rand/1/bin with the target as base
// vector): initialization samples every gene uniformly from its range and
// sorts each axis so tuples are non-decreasing across operating points; each
// generation mutates, crosses over, and greedily selects. Infeasible
// individuals carry fitness +infinity; when an entire initialization is
// infeasible it is resampled up to init_retries times before a
// std::runtime_error. The best fitness per generation never increases.
OptimizeResult optimize_de(const std::function<double(const QSet&)>& fitness,
                           const OptimizerConfig& cfg);

// Constrained rate-distortion fitness: +infinity when any operating point's
// mean bitrate over the clouds leaves its window, when any per-cloud curve
// is unusable (non-monotone rate or quality, disjoint quality ranges), or
// when the evaluator throws; otherwise the sum over clouds of the BD-rate of
// q's curve against reference's. A QSet evaluated against itself scores 0.
// `why`, when given, receives the infeasibility cause.
double qset_fitness(const QSet& q, const QSet& reference, const RdEvaluator& rd,
                    size_t cloud_count, const BitrateConstraints& constraints,
                    std::string* why = nullptr);

// Memoizing wrapper around qset_fitness: each distinct (tuple, cloud) pair
// hits the evaluator once and each distinct QSet is scored once.
class FitnessCache {
 public:
  FitnessCache(RdEvaluator rd, size_t cloud_count, BitrateConstraints constraints,
               QSet reference);

  double operator()(const QSet& q);
  size_t rd_calls() const { return rd_calls_; }

 private:
  RdEvaluator rd_;
  size_t cloud_count_;
  BitrateConstraints constraints_;
  QSet reference_;
  size_t rd_calls_ = 0;
  std::map<std::array<int64_t, 4>, RatePsnr> points_;
  std::map<std::array<int32_t, QSet::kGenes>, double> scores_;
};

// Offline search for the operating points: optimize_de over the cached
// constrained fitness. Deterministic given cfg.seed.
OptimizeResult optimize_qs(const RdEvaluator& rd, size_t cloud_count,
                           const BitrateConstraints& constraints,
                           const QSet& reference, const OptimizerConfig& cfg);

}  // namespace slpcc

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "slpcc/metrics.hpp"
#include "slpcc/qsopt.hpp"
#include "slpcc/quant.hpp"
#include "slpcc/rng.hpp"

using namespace slpcc;

namespace {

// Synthetic rate model: monotone in every axis, azimuth dominant, spanning
// roughly [0.45, 8.3] bpip over the valid ranges.
double stub_rate(const QuantTuple& t) {
  return 0.45 * t.q_phi + 0.002 * (t.q_theta + t.q_r);
}

// Quality on the rate-distortion frontier for that rate.
double stub_frontier(double rate) { return 15.0 + 6.0 * std::log2(1.0 + rate); }

RatePsnr frontier_point(const QuantTuple& t) {
  const double rate = stub_rate(t);
  return {rate, stub_frontier(rate)};
}

// Windows that accept every tuple the stub rate model can produce.
BitrateConstraints wide_constraints() {
  BitrateConstraints c;
  for (size_t i = 0; i < QSet::kPoints; ++i)
    c.intervals[i] = {0.01 * double(i + 1), 20.0 + double(i)};
  return c;
}

// Six distinct tuples with strictly increasing stub rates (~0.95 to ~5.7).
QSet ladder_qset() {
  QSet q;
  for (size_t i = 0; i < QSet::kPoints; ++i) {
    const int32_t step = int32_t(i + 1);
    q.tuples[i] = {2 * step, 10 * step, 15 * step};
  }
  return q;
}

QSet qset_from_genes(const std::array<int32_t, QSet::kGenes>& genes) {
  QSet q;
  for (size_t i = 0; i < QSet::kGenes; ++i) q.set_gene(i, genes[i]);
  return q;
}

}  // namespace

TEST_CASE("qsopt: gene view, clamping, shipped defaults and constraint presets") {
  QSet q;
  for (size_t i = 0; i < QSet::kGenes; ++i) q.set_gene(i, int32_t(i + 1));
  for (size_t i = 0; i < QSet::kGenes; ++i) CHECK(q.gene(i) == int32_t(i + 1));
  CHECK(q.tuples[0].q_phi == 1);
  CHECK(q.tuples[0].q_theta == 2);
  CHECK(q.tuples[0].q_r == 3);
  CHECK(q.tuples[5].q_r == 18);

  QSet wild;
  wild.tuples[0] = {0, 300, -5};
  wild.tuples[1] = {17, 0, 257};
  wild.tuples[2] = {16, 256, 256};
  const QSet clamped = clamp_to_ranges(wild);
  CHECK(clamped.tuples[0] == QuantTuple{1, 256, 1});
  CHECK(clamped.tuples[1] == QuantTuple{16, 1, 256});
  CHECK(clamped.tuples[2] == QuantTuple{16, 256, 256});
  for (const QuantTuple& t : clamped.tuples) CHECK_NOTHROW(validate(t));

  const QSet d = default_qset();
  const int32_t phi[6] = {1, 2, 2, 4, 8, 8};
  const int32_t theta[6] = {2, 3, 4, 15, 33, 61};
  const int32_t r[6] = {9, 18, 34, 66, 121, 172};
  for (size_t i = 0; i < 6; ++i) {
    CHECK(d.tuples[i].q_phi == phi[i]);
    CHECK(d.tuples[i].q_theta == theta[i]);
    CHECK(d.tuples[i].q_r == r[i]);
    CHECK_NOTHROW(validate(d.tuples[i]));
  }

  const BitrateConstraints sk = BitrateConstraints::semantic_kitti();
  CHECK_NOTHROW(validate(sk));
  CHECK(sk.intervals[0].lo == doctest::Approx(2.8));
  CHECK(sk.intervals[0].hi == doctest::Approx(3.0));
  CHECK(sk.intervals[5].lo == doctest::Approx(8.8));
  CHECK(sk.intervals[5].hi == doctest::Approx(9.2));
  const BitrateConstraints ford = BitrateConstraints::ford();
  CHECK_NOTHROW(validate(ford));
  CHECK(ford.intervals[0].lo == doctest::Approx(3.0));
  CHECK(ford.intervals[5].hi == doctest::Approx(9.4));

  BitrateConstraints bad = sk;
  bad.intervals[2] = {4.8, 4.8};  // empty window
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = sk;
  bad.intervals[3].lo = bad.intervals[2].lo;  // lower edge fails to increase
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = sk;
  bad.intervals[4].hi = bad.intervals[3].hi;  // upper edge fails to increase
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("qsopt: mutation matches per-gene recomputation and stays in range") {
  Rng rng(41);
  const auto random_qset = [&rng] {
    QSet q;
    q.set_gene(0, int32_t(rng.uniform_int(1, 16)));
    for (size_t i = 1; i < QSet::kGenes; ++i)
      q.set_gene(i, int32_t(rng.uniform_int(1, i % 3 == 0 ? 16 : 256)));
    return q;
  };

  for (int trial = 0; trial < 50; ++trial) {
    const QSet base = random_qset(), a = random_qset(), b = random_qset();
    const QSet mutant = de_mutate(base, a, b, 0.4);
    for (size_t i = 0; i < QSet::kGenes; ++i) {
      const double lo = 1.0, hi = i % 3 == 0 ? 16.0 : 256.0;
      const double expected = std::clamp(
          round_even(double(base.gene(i)) + 0.4 * double(a.gene(i) - b.gene(i))), lo, hi);
      CHECK(mutant.gene(i) == int32_t(expected));
    }
  }

  // Identical donors leave the base untouched.
  for (int trial = 0; trial < 10; ++trial) {
    const QSet base = random_qset(), donor = random_qset();
    CHECK(de_mutate(base, donor, donor, 0.4) == base);
  }

  // A full-range difference at full scale clamps to the edges.
  QSet top, bottom;
  for (size_t i = 0; i < QSet::kGenes; ++i) {
    top.set_gene(i, i % 3 == 0 ? 16 : 256);
    bottom.set_gene(i, 1);
  }
  CHECK(de_mutate(top, top, bottom, 1.0) == top);
  CHECK(de_mutate(bottom, bottom, top, 1.0) == bottom);
}

TEST_CASE("qsopt: crossover keeps binomial semantics and the guaranteed gene") {
  QSet target, mutant;
  for (size_t i = 0; i < QSet::kGenes; ++i) {
    target.set_gene(i, 2);
    mutant.set_gene(i, int32_t(3 + i % 3));  // differs from target everywhere
  }

  Rng all(7);
  CHECK(de_crossover(target, mutant, 1.0, all) == mutant);

  // cr = 0 still takes exactly one gene from the mutant.
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const QSet trial = de_crossover(target, mutant, 0.0, rng);
    int diffs = 0;
    for (size_t i = 0; i < QSet::kGenes; ++i) {
      if (trial.gene(i) != target.gene(i)) {
        ++diffs;
        CHECK(trial.gene(i) == mutant.gene(i));
      }
    }
    CHECK(diffs == 1);
  }

  // Same seed reproduces the trial exactly.
  Rng r1(99), r2(99);
  CHECK(de_crossover(target, mutant, 0.9, r1) == de_crossover(target, mutant, 0.9, r2));

  // The mutant-gene fraction tracks cr (1 guaranteed + 17 at 0.9 -> ~0.906).
  Rng stat(5);
  size_t from_mutant = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    const QSet trial = de_crossover(target, mutant, 0.9, stat);
    for (size_t i = 0; i < QSet::kGenes; ++i)
      if (trial.gene(i) == mutant.gene(i)) ++from_mutant;
  }
  const double fraction = double(from_mutant) / double(trials * QSet::kGenes);
  CHECK(fraction > 0.88);
  CHECK(fraction < 0.93);
}

TEST_CASE("qsopt: selection keeps the target on ties, NaN and infinities") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(de_accepts_trial(1.0, 0.5));
  CHECK(de_accepts_trial(inf, 1.0));
  CHECK_FALSE(de_accepts_trial(0.5, 0.5));
  CHECK_FALSE(de_accepts_trial(0.5, 1.0));
  CHECK_FALSE(de_accepts_trial(inf, inf));
  CHECK_FALSE(de_accepts_trial(1.0, std::numeric_limits<double>::quiet_NaN()));
}

TEST_CASE("qsopt: fitness is zero against itself and infinite on violations") {
  const RdEvaluator rd = [](const QuantTuple& t, size_t) { return frontier_point(t); };
  const QSet q = ladder_qset();

  std::string why = "stale";
  CHECK(qset_fitness(q, q, rd, 3, wide_constraints(), &why) == 0.0);
  CHECK(why.empty());

  // Mean bitrate below the first window's lower edge (windows still ordered).
  BitrateConstraints tight;
  for (size_t i = 0; i < QSet::kPoints; ++i)
    tight.intervals[i] = {stub_rate(q.tuples[0]) + 0.01 * double(i + 1), 20.0 + double(i)};
  CHECK(std::isinf(qset_fitness(q, q, rd, 3, tight, &why)));
  CHECK(why.find("bitrate") != std::string::npos);

  // A mean exactly on a closed edge stays feasible.
  BitrateConstraints edges;
  for (size_t i = 0; i < QSet::kPoints; ++i)
    edges.intervals[i] = {stub_rate(q.tuples[0]) + 0.01 * double(i),
                          stub_rate(q.tuples[5]) - 0.1 * double(QSet::kPoints - 1 - i)};
  CHECK(qset_fitness(q, q, rd, 3, edges, &why) == 0.0);

  // A throwing evaluator marks the set infeasible and reports the cause.
  const RdEvaluator broken = [](const QuantTuple& t, size_t) -> RatePsnr {
    if (t.q_phi == 6) throw std::runtime_error("tuple refused");
    return frontier_point(t);
  };
  CHECK(std::isinf(qset_fitness(q, q, broken, 2, wide_constraints(), &why)));
  CHECK(why == "tuple refused");

  // Duplicate tuples collapse two curve points; the curve is unusable.
  QSet dup = q;
  dup.tuples[3] = dup.tuples[2];
  CHECK(std::isinf(qset_fitness(dup, q, rd, 2, wide_constraints(), &why)));
  CHECK_FALSE(why.empty());

  CHECK_THROWS_AS(qset_fitness(q, q, rd, 0, wide_constraints()), std::invalid_argument);
  QSet invalid = q;
  invalid.tuples[0].q_phi = 0;
  CHECK_THROWS_AS(qset_fitness(invalid, q, rd, 2, wide_constraints()), std::invalid_argument);
}

TEST_CASE("qsopt: a dominating curve scores the analytic negative value") {
  // The candidate reaches every reference quality at exactly half the rate,
  // so each per-cloud term is -50% and the two-cloud sum is -100.
  std::map<std::array<int32_t, 3>, RatePsnr> table;
  QSet candidate, reference;
  BitrateConstraints windows;
  for (size_t i = 0; i < QSet::kPoints; ++i) {
    const double ref_rate = double(int64_t(1) << i);  // 1, 2, 4, ..., 32
    const double psnr = 40.0 + 5.0 * double(i);
    reference.tuples[i] = {1, int32_t(10 + i), 10};
    candidate.tuples[i] = {1, int32_t(30 + i), 10};
    table[{1, int32_t(10 + i), 10}] = {ref_rate, psnr};
    table[{1, int32_t(30 + i), 10}] = {0.5 * ref_rate, psnr};
    windows.intervals[i] = {0.4 * ref_rate, 0.6 * ref_rate};
  }
  const RdEvaluator rd = [&table](const QuantTuple& t, size_t) {
    return table.at({t.q_phi, t.q_theta, t.q_r});
  };

  const double fit = qset_fitness(candidate, reference, rd, 2, windows);
  CHECK(fit == doctest::Approx(-100.0).epsilon(1e-9));

  // Matches the summed curve-comparison oracle computed directly.
  std::array<RatePsnr, 6> a{}, b{};
  for (size_t i = 0; i < 6; ++i) {
    a[i] = rd(candidate.tuples[i], 0);
    b[i] = rd(reference.tuples[i], 0);
  }
  CHECK(fit == doctest::Approx(2.0 * bd_rate(a, b)).epsilon(1e-12));
}

TEST_CASE("qsopt: the cache evaluates each tuple-cloud pair once") {
  size_t calls = 0;
  const RdEvaluator rd = [&calls](const QuantTuple& t, size_t) {
    ++calls;
    return frontier_point(t);
  };
  const QSet q = ladder_qset();
  QSet other = q;
  other.tuples[0].q_theta += 1;  // shares five of six tuples with q

  FitnessCache cache(rd, 2, wide_constraints(), q);
  const double first = cache(q);
  CHECK(first == 0.0);
  CHECK(calls == 12);  // 6 tuples x 2 clouds; candidate == reference here
  CHECK(cache(q) == first);
  CHECK(calls == 12);  // cached score, no new evaluations
  cache(other);
  CHECK(calls == 14);  // only the changed tuple hits the evaluator
  CHECK(cache.rd_calls() == calls);
}

TEST_CASE("qsopt: the optimizer finds the optimum of a separable convex objective") {
  const std::array<int32_t, QSet::kGenes> target = {
      2, 10, 20, 3, 30, 40, 5, 60, 80, 7, 100, 120, 9, 150, 160, 12, 200, 220};
  const auto objective = [&target](const QSet& q) {
    double sum = 0.0;
    for (size_t i = 0; i < QSet::kGenes; ++i) {
      const double w = i % 3 == 0 ? 1.0 : 0.02;
      const double d = double(q.gene(i) - target[i]);
      sum += w * d * d;
    }
    return sum;
  };

  OptimizerConfig cfg;
  cfg.population = 20;
  cfg.iterations = 800;
  cfg.seed = 3;
  const OptimizeResult res = optimize_de(objective, cfg);

  CHECK(res.trace.size() == size_t(cfg.iterations + 1));
  CHECK(res.trace.front().generation == 0);
  CHECK(res.trace.back().generation == cfg.iterations);
  for (size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i].best_fitness <= res.trace[i - 1].best_fitness);
  CHECK(res.best == res.trace.back().best);
  CHECK(res.best_fitness == objective(res.best));
  CHECK(res.fitness_calls == size_t(cfg.population) * size_t(cfg.iterations + 1));

  for (size_t i = 0; i < QSet::kGenes; ++i) {
    INFO("gene ", i, " got ", res.best.gene(i), " want ", target[i]);
    CHECK(std::abs(res.best.gene(i) - target[i]) <= 1);
  }
}

TEST_CASE("qsopt: seeded runs trace byte-identically and other seeds diverge") {
  const auto objective = [](const QSet& q) {
    double sum = 0.0;
    for (size_t i = 0; i < QSet::kGenes; ++i) {
      const double d = double(q.gene(i)) - double(5 + 3 * (i % 7));
      sum += d * d;
    }
    return sum;
  };
  OptimizerConfig cfg;
  cfg.population = 12;
  cfg.iterations = 40;
  cfg.seed = 11;

  const OptimizeResult a = optimize_de(objective, cfg);
  const OptimizeResult b = optimize_de(objective, cfg);
  CHECK(a.best == b.best);
  CHECK(a.best_fitness == b.best_fitness);
  CHECK(format_trace(a.trace) == format_trace(b.trace));
  CHECK_FALSE(format_trace(a.trace).empty());

  cfg.seed = 12;
  const OptimizeResult c = optimize_de(objective, cfg);
  CHECK(format_trace(a.trace) != format_trace(c.trace));
}

TEST_CASE("qsopt: infeasible initializations resample, then fail with a diagnostic") {
  size_t calls = 0;
  const double inf = std::numeric_limits<double>::infinity();
  const auto hopeless = [&calls, inf](const QSet&) {
    ++calls;
    return inf;
  };
  OptimizerConfig cfg;
  cfg.population = 5;
  cfg.iterations = 2;
  cfg.init_retries = 3;
  cfg.seed = 1;
  CHECK_THROWS_WITH_AS(optimize_de(hopeless, cfg), doctest::Contains("infeasible"),
                       std::runtime_error);
  CHECK(calls == 20);  // 5 individuals x (1 + 3) attempts, no generations run

  // One feasible region is enough to proceed.
  const auto narrow = [inf](const QSet& q) {
    return q.tuples[0].q_phi <= 8 ? double(q.tuples[0].q_phi) : inf;
  };
  const OptimizeResult res = optimize_de(narrow, cfg);
  CHECK(std::isfinite(res.best_fitness));
  CHECK(res.best.tuples[0].q_phi <= 8);
}

TEST_CASE("qsopt: constrained search on a synthetic rate model beats the reference") {
  // Quality rises above the frontier as each tuple approaches the balanced
  // shape (q_theta, q_r) = (12, 18) * q_phi; the reference ladder sits far
  // from it, so a working optimizer must reach a negative score.
  const auto quality_rd = [](const QuantTuple& t, size_t cloud) {
    const double rate = stub_rate(t) * (1.0 + 0.004 * double(cloud % 4));
    const double dt = (double(t.q_theta) - 12.0 * t.q_phi) / 20.0;
    const double dr = (double(t.q_r) - 18.0 * t.q_phi) / 25.0;
    const double bonus = 0.5 * std::exp(-dt * dt - dr * dr);
    return RatePsnr{rate, stub_frontier(rate) + bonus};
  };

  BitrateConstraints windows;
  const double lo[6] = {0.2, 0.5, 0.8, 1.1, 1.4, 1.7};
  const double hi[6] = {4.0, 5.0, 6.0, 7.0, 8.0, 8.5};
  for (size_t i = 0; i < 6; ++i) windows.intervals[i] = {lo[i], hi[i]};

  OptimizerConfig cfg;
  cfg.population = 10;
  cfg.iterations = 30;
  cfg.seed = 5;
  const OptimizeResult res = optimize_qs(quality_rd, 2, windows, ladder_qset(), cfg);

  CHECK(std::isfinite(res.best_fitness));
  CHECK(res.best_fitness < -1.0);
  for (size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i].best_fitness <= res.trace[i - 1].best_fitness);
  for (const QuantTuple& t : res.best.tuples) CHECK_NOTHROW(validate(t));

  // Same seed, same data: identical search.
  const OptimizeResult repeat = optimize_qs(quality_rd, 2, windows, ladder_qset(), cfg);
  CHECK(format_trace(res.trace) == format_trace(repeat.trace));
}

TEST_CASE("qsopt: disjoint cloud subsets from one distribution agree within 5%") {
  // Eight clouds drawn from one synthetic distribution; subsets see clouds
  // 0-3 and 4-7. Cross-evaluating each subset's optimum on the other subset
  // must score within 5% of that subset's own optimum.
  const auto cloud_rd = [](const QuantTuple& t, size_t cloud) {
    Rng jitter(1000 + uint64_t(cloud));
    const double rate = stub_rate(t) * (1.0 + 0.004 * (jitter.uniform() - 0.5));
    const double dt = (double(t.q_theta) - 12.0 * t.q_phi) / 20.0;
    const double dr = (double(t.q_r) - 18.0 * t.q_phi) / 25.0;
    const double bonus = 0.5 * std::exp(-dt * dt - dr * dr);
    return RatePsnr{rate, stub_frontier(rate) + bonus + 0.02 * jitter.uniform()};
  };
  const RdEvaluator rd_a = [&cloud_rd](const QuantTuple& t, size_t n) { return cloud_rd(t, n); };
  const RdEvaluator rd_b = [&cloud_rd](const QuantTuple& t, size_t n) {
    return cloud_rd(t, n + 4);
  };

  BitrateConstraints windows;
  const double lo[6] = {0.2, 0.5, 0.8, 1.1, 1.4, 1.7};
  const double hi[6] = {4.0, 5.0, 6.0, 7.0, 8.0, 8.5};
  for (size_t i = 0; i < 6; ++i) windows.intervals[i] = {lo[i], hi[i]};

  OptimizerConfig cfg;
  cfg.population = 10;
  cfg.iterations = 30;
  cfg.seed = 5;
  const QSet reference = ladder_qset();
  const OptimizeResult best_a = optimize_qs(rd_a, 4, windows, reference, cfg);
  const OptimizeResult best_b = optimize_qs(rd_b, 4, windows, reference, cfg);

  const double a_on_b = qset_fitness(best_a.best, reference, rd_b, 4, windows);
  const double b_on_a = qset_fitness(best_b.best, reference, rd_a, 4, windows);
  CHECK(std::isfinite(a_on_b));
  CHECK(std::isfinite(b_on_a));
  const double tol_b = 0.05 * std::abs(best_b.best_fitness);
  const double tol_a = 0.05 * std::abs(best_a.best_fitness);
  CHECK(std::abs(a_on_b - best_b.best_fitness) < tol_b);
  CHECK(std::abs(b_on_a - best_a.best_fitness) < tol_a);
}

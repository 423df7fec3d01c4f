#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "slpcc/models.hpp"
#include "slpcc/rng.hpp"

using namespace slpcc;

namespace {

std::string temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(dir);
  return dir.string();
}

double rel_err(double a, double b) {
  double scale = std::max(1e-8, std::fabs(a) + std::fabs(b));
  return std::fabs(a - b) / scale;
}

}  // namespace

TEST_CASE("models: default entropy net is a usable static distribution") {
  EntropyNet net;
  net.init_default(true);
  std::vector<double> ctx(EntropyNet::kContext, 0.0);
  auto p = net.forward(ctx.data());
  CHECK(p.mu == 0.0);
  CHECK(p.alpha == 0.0);
  CHECK(p.sigma == doctest::Approx(std::log1p(std::exp(2.0)) + 1e-4).epsilon(1e-12));
  CHECK(p.sigma >= 1e-4);

  // Nonzero contexts produce the same output at zero weights.
  for (size_t i = 0; i < ctx.size(); ++i) ctx[i] = double(i) - 7.0;
  auto p2 = net.forward(ctx.data());
  CHECK(p2.mu == p.mu);
  CHECK(p2.sigma == p.sigma);
}

TEST_CASE("models: entropy net forward is deterministic and finite") {
  EntropyNet net;
  net.init_random(true, 99);
  Rng rng(15);
  std::vector<double> ctx;
  for (int i = 0; i < EntropyNet::kContext; ++i) ctx.push_back(rng.uniform_real(-3, 3));
  auto a = net.forward(ctx.data());
  auto b = net.forward(ctx.data());
  CHECK(a.mu == b.mu);
  CHECK(a.sigma == b.sigma);
  CHECK(a.alpha == b.alpha);
  CHECK(std::isfinite(a.mu));
  CHECK(a.sigma >= EntropyNet::kSigmaFloor);
}

TEST_CASE("models: entropy net gradient check") {
  EntropyNet net;
  net.init_random(true, 17);
  Rng rng(16);
  std::vector<double> ctx;
  for (int i = 0; i < EntropyNet::kContext; ++i) ctx.push_back(rng.uniform_real(-2, 2));

  // Smooth proxy loss over the mapped outputs.
  auto loss = [&]() {
    auto p = net.forward(ctx.data());
    return p.mu * p.mu + 2.0 * p.sigma * p.sigma + 0.5 * p.alpha * p.alpha;
  };
  auto params = net.params();
  nn::zero_grad(params);
  EntropyNet::Trace trace;
  auto p = net.forward(ctx.data(), &trace);
  net.backward(trace, 2.0 * p.mu, 4.0 * p.sigma, 1.0 * p.alpha);

  const double eps = 1e-5;
  std::vector<std::pair<size_t, size_t>> slots;
  for (size_t b = 0; b < params.size(); ++b)
    for (size_t i = 0; i < params[b]->size(); ++i) slots.push_back({b, i});
  for (int probe = 0; probe < 100; ++probe) {
    auto [b, i] = slots[size_t(rng.uniform_int(0, int64_t(slots.size()) - 1))];
    double& w = params[b]->w[i];
    double saved = w, analytic = params[b]->g[i];
    w = saved + eps;
    double lp = loss();
    w = saved - eps;
    double lm = loss();
    w = saved;
    CHECK(rel_err(analytic, (lp - lm) / (2 * eps)) < 1e-4);
  }
}

TEST_CASE("models: default predictors pass their anchors through") {
  LaepModel laep;
  laep.init_default();
  std::vector<double> seq(size_t(LaepModel::kSeq) * size_t(LaepModel::kFeat), 0.37);
  CHECK(laep.forward(seq.data()) == 0.0);

  InterRpModel rp;
  rp.init_default();
  std::vector<double> s(size_t(InterRpModel::kSeq) * 4, 0.2);
  std::vector<double> r(size_t(InterRpModel::kSeq), -0.1);
  CHECK(rp.forward(s.data(), s.data(), r.data()) == 0.0);
}

TEST_CASE("models: elevation predictor gradient check") {
  LaepModel m;
  m.init_random(23);
  Rng rng(18);
  std::vector<double> seq;
  for (int i = 0; i < LaepModel::kSeq * LaepModel::kFeat; ++i)
    seq.push_back(rng.uniform_real(-1, 1));

  auto loss = [&]() {
    double c = m.forward(seq.data());
    return c * c;
  };
  auto params = m.params();
  nn::zero_grad(params);
  LaepModel::Trace trace;
  double c = m.forward(seq.data(), &trace);
  m.backward(trace, 2.0 * c);

  const double eps = 1e-5;
  std::vector<std::pair<size_t, size_t>> slots;
  for (size_t b = 0; b < params.size(); ++b)
    for (size_t i = 0; i < params[b]->size(); ++i) slots.push_back({b, i});
  int checked = 0;
  for (int probe = 0; probe < 120 && checked < 120; ++probe) {
    auto [b, i] = slots[size_t(rng.uniform_int(0, int64_t(slots.size()) - 1))];
    double& w = params[b]->w[i];
    double saved = w, analytic = params[b]->g[i];
    w = saved + eps;
    double lp = loss();
    w = saved - eps;
    double lm = loss();
    w = saved;
    double fd = (lp - lm) / (2 * eps);
    if (analytic == 0.0 && std::fabs(fd) < 1e-9) continue;  // dead relu path
    ++checked;
    CHECK(rel_err(analytic, fd) < 1e-4);
  }
  CHECK(checked > 50);
}

TEST_CASE("models: radius predictor gradient check") {
  InterRpModel m;
  m.init_random(29);
  Rng rng(19);
  std::vector<double> sseq, tseq, rseq;
  for (int i = 0; i < InterRpModel::kSeq * 4; ++i) {
    sseq.push_back(rng.uniform_real(-1, 1));
    tseq.push_back(rng.uniform_real(-1, 1));
  }
  for (int i = 0; i < InterRpModel::kSeq; ++i) rseq.push_back(rng.uniform_real(-1, 1));

  auto loss = [&]() {
    double c = m.forward(sseq.data(), tseq.data(), rseq.data());
    return 0.5 * c * c;
  };
  auto params = m.params();
  nn::zero_grad(params);
  InterRpModel::Trace trace;
  double c = m.forward(sseq.data(), tseq.data(), rseq.data(), &trace);
  m.backward(trace, c);

  const double eps = 1e-5;
  std::vector<std::pair<size_t, size_t>> slots;
  for (size_t b = 0; b < params.size(); ++b)
    for (size_t i = 0; i < params[b]->size(); ++i) slots.push_back({b, i});
  int checked = 0;
  for (int probe = 0; probe < 120 && checked < 120; ++probe) {
    auto [b, i] = slots[size_t(rng.uniform_int(0, int64_t(slots.size()) - 1))];
    double& w = params[b]->w[i];
    double saved = w, analytic = params[b]->g[i];
    w = saved + eps;
    double lp = loss();
    w = saved - eps;
    double lm = loss();
    w = saved;
    double fd = (lp - lm) / (2 * eps);
    if (analytic == 0.0 && std::fabs(fd) < 1e-9) continue;
    ++checked;
    CHECK(rel_err(analytic, fd) < 1e-4);
  }
  CHECK(checked > 50);
}

TEST_CASE("models: weight files round-trip bit-exactly") {
  std::string dir = temp_dir("slpcc_model_test");

  EntropyNet net;
  net.init_random(false, 31);
  std::string path = dir + "/ent.slpw";
  save_entropy_net(net, "radius", path);
  EntropyNet loaded = load_entropy_net("radius", path);
  CHECK(nn::flatten(net.params()) == nn::flatten(loaded.params()));
  CHECK(loaded.skewed == false);
  CHECK_THROWS(load_entropy_net("azimuth", path));  // axis tag mismatch

  LaepModel laep;
  laep.init_random(37);
  laep.scales.r = 250.0;
  save_laep(laep, dir + "/laep.slpw");
  LaepModel laep2 = load_laep(dir + "/laep.slpw");
  CHECK(nn::flatten(laep.params()) == nn::flatten(laep2.params()));
  CHECK(laep2.scales.r == 250.0);

  InterRpModel rp;
  rp.init_random(41);
  save_inter_rp(rp, dir + "/rp.slpw");
  InterRpModel rp2 = load_inter_rp(dir + "/rp.slpw");
  CHECK(nn::flatten(rp.params()) == nn::flatten(rp2.params()));

  CHECK_THROWS(load_laep(dir + "/rp.slpw"));          // kind mismatch
  CHECK_THROWS(load_inter_rp(dir + "/missing.slpw"));  // no file
}

TEST_CASE("models: model set round-trips and checksums") {
  std::string dir = temp_dir("slpcc_modelset_test");
  ModelSet set = ModelSet::defaults();
  set.azimuth.init_random(true, 5);
  set.quantize_weights();
  uint32_t sum = set.weight_checksum();
  set.save_dir(dir);

  ModelSet back = ModelSet::load_dir(dir);
  CHECK(back.weight_checksum() == sum);

  // Same context, same parameters after the round trip.
  std::vector<double> ctx(EntropyNet::kContext, 0.25);
  auto a = set.azimuth.forward(ctx.data());
  auto b = back.azimuth.forward(ctx.data());
  CHECK(a.mu == b.mu);
  CHECK(a.sigma == b.sigma);
  CHECK(a.alpha == b.alpha);

  back.radius.head.bias.w[0] += 0.5;
  CHECK(back.weight_checksum() != sum);

  CHECK_THROWS(ModelSet::load_dir(dir + "/nope"));
}

TEST_CASE("models: float32 quantization is idempotent") {
  ModelSet set = ModelSet::defaults();
  set.elevation_predictor.init_random(77);
  set.quantize_weights();
  uint32_t a = set.weight_checksum();
  set.quantize_weights();
  CHECK(set.weight_checksum() == a);
}

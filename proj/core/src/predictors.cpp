#include "slpcc/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace slpcc {

void TreeState::push(double r_bar, double theta_bar, double phi_bar, double rres) {
  r.push_back(r_bar);
  theta.push_back(theta_bar);
  phi.push_back(phi_bar);
  radius_residual.push_back(rres);
  theta_sum += theta_bar;
}

double dc_predict_radius(const TreeState& st) { return st.r.back(); }

double tree_mean_elevation(const TreeState& st) {
  if (st.size() == 0) return st.nominal_elevation;
  return st.theta_sum / double(st.size());
}

double wrap_signed(double delta) {
  double d = std::fmod(delta, kTwoPi);
  if (d < -kPi) d += kTwoPi;
  if (d >= kPi) d -= kTwoPi;
  return d;
}

namespace {

// Sort candidate indices by (wrapped azimuth distance, index), keep the first
// `count`, and return them in ascending index order.
std::vector<uint32_t> select_nearest(std::vector<uint32_t>& cand, const double* phis,
                                     double query, size_t count) {
  std::stable_sort(cand.begin(), cand.end(), [&](uint32_t a, uint32_t b) {
    double da = wrapped_distance(phis[a], query);
    double db = wrapped_distance(phis[b], query);
    if (da != db) return da < db;
    return a < b;
  });
  if (cand.size() > count) cand.resize(count);
  std::sort(cand.begin(), cand.end());
  return cand;
}

}  // namespace

std::vector<uint32_t> spatial_neighbors(const TreeState& st, double phi, size_t count) {
  const size_t n = st.size();
  std::vector<uint32_t> cand;
  if (n <= 2 * count) {
    cand.resize(n);
    for (size_t i = 0; i < n; ++i) cand[i] = uint32_t(i);
  } else {
    // The prefix is azimuth-sorted, and wrapped distance to any query is
    // minimized at one of its two ends, so the nearest `count` points are
    // among the first `count` and last `count` entries.
    cand.reserve(2 * count);
    for (size_t i = 0; i < count; ++i) cand.push_back(uint32_t(i));
    for (size_t i = n - count; i < n; ++i) cand.push_back(uint32_t(i));
  }
  return select_nearest(cand, st.phi.data(), phi, count);
}

const PredictiveTree* find_tree(const Frame& frame, int32_t laser) {
  for (const auto& t : frame.trees)
    if (t.laser == laser) return &t;
  return nullptr;
}

std::vector<uint32_t> tree_azimuth_knn(const PredictiveTree& tree, double phi, size_t k) {
  const size_t n = tree.size();
  k = std::min(k, n);
  if (k == 0) return {};

  std::vector<uint32_t> cand;
  if (n <= 2 * k + 2) {
    cand.resize(n);
    for (size_t i = 0; i < n; ++i) cand[i] = uint32_t(i);
  } else {
    // Points are azimuth-sorted; on the circle, the j-th nearest point is at
    // most j positions from the insertion point of `phi` (along the direction
    // realizing its wrapped distance), so a window of k per side is exact.
    auto it = std::lower_bound(tree.points.begin(), tree.points.end(), phi,
                               [](const SphericalPoint& p, double v) { return p.phi < v; });
    size_t pos = size_t(it - tree.points.begin());
    cand.reserve(2 * k + 2);
    for (size_t j = 0; j < 2 * k + 2; ++j) {
      size_t idx = (pos + n - (k + 1) + j) % n;
      cand.push_back(uint32_t(idx));
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  }

  std::vector<double> phis(n, 0.0);
  for (size_t i = 0; i < n; ++i) phis[i] = tree.points[i].phi;
  return select_nearest(cand, phis.data(), phi, k);
}

namespace {

void write_features(double* row, double r_bar, double theta_bar, double phi_bar, int32_t laser,
                    double phi_i, int32_t laser_i, const FeatureScales& sc) {
  row[0] = r_bar / sc.r;
  row[1] = theta_bar / sc.theta;
  row[2] = wrap_signed(phi_bar - phi_i) / sc.dphi;
  row[3] = double(laser - laser_i) / sc.did;
}

}  // namespace

void build_elevation_features(const TreeState& st, double r_bar_i, double phi_bar_i,
                              const FeatureScales& sc, double* seq) {
  constexpr size_t kSeq = size_t(LaepModel::kSeq);
  constexpr size_t kFeat = size_t(LaepModel::kFeat);
  std::memset(seq, 0, kSeq * kFeat * sizeof(double));

  // Rows [0, kSeq-2]: the 49 most recent prefix points in coding order, zero
  // rows first when the prefix is shorter.
  const size_t n = st.size();
  const size_t take = std::min(n, kSeq - 1);
  for (size_t j = 0; j < take; ++j) {
    size_t src = n - take + j;                   // oldest of the window first
    size_t row = (kSeq - 1 - take) + j;
    write_features(seq + row * kFeat, st.r[src], st.theta[src], st.phi[src], st.laser, phi_bar_i,
                   st.laser, sc);
  }

  // Last row: the virtual current point — known radius and azimuth, previous
  // elevation standing in for the one being predicted.
  double theta_prev = n > 0 ? st.theta.back() : st.nominal_elevation;
  write_features(seq + (kSeq - 1) * kFeat, r_bar_i, theta_prev, phi_bar_i, st.laser, phi_bar_i,
                 st.laser, sc);
}

bool build_radius_features(const TreeState& st, double phi_bar_i, const Frame* reference,
                           const FeatureScales& sc, size_t k, double* spatial_seq,
                           double* temporal_seq, double* residual_seq) {
  constexpr size_t kSeq = size_t(InterRpModel::kSeq);
  constexpr size_t kFeat = 4;

  std::vector<uint32_t> sp = spatial_neighbors(st, phi_bar_i, kSeq);
  if (sp.size() < 4 || reference == nullptr) return false;

  // Temporal neighborhood: k azimuth-nearest points from each reference tree
  // with laser id within 1 of the current tree, ordered (laser, index).
  struct TemporalHit {
    const SphericalPoint* p;
  };
  std::vector<TemporalHit> temporal;
  temporal.reserve(3 * k);
  for (int32_t laser = st.laser - 1; laser <= st.laser + 1; ++laser) {
    const PredictiveTree* tree = find_tree(*reference, laser);
    if (tree == nullptr) continue;
    for (uint32_t idx : tree_azimuth_knn(*tree, phi_bar_i, k))
      temporal.push_back({&tree->points[idx]});
  }
  if (temporal.empty()) return false;

  std::memset(spatial_seq, 0, kSeq * kFeat * sizeof(double));
  std::memset(temporal_seq, 0, kSeq * kFeat * sizeof(double));
  std::memset(residual_seq, 0, kSeq * sizeof(double));

  // Spatial and residual sequences share indices and padding: points in
  // ascending coding order, zero rows first.
  const size_t pad = kSeq - sp.size();
  for (size_t j = 0; j < sp.size(); ++j) {
    uint32_t src = sp[j];
    write_features(spatial_seq + (pad + j) * kFeat, st.r[src], st.theta[src], st.phi[src],
                   st.laser, phi_bar_i, st.laser, sc);
    residual_seq[pad + j] = st.radius_residual[src] / sc.residual;
  }

  // Temporal sequence: real points first, then repeats of the azimuth-nearest
  // of them until the sequence is full.
  size_t nearest = 0;
  for (size_t j = 1; j < temporal.size(); ++j) {
    if (wrapped_distance(temporal[j].p->phi, phi_bar_i) <
        wrapped_distance(temporal[nearest].p->phi, phi_bar_i))
      nearest = j;
  }
  for (size_t j = 0; j < kSeq; ++j) {
    const SphericalPoint* p = j < temporal.size() ? temporal[j].p : temporal[nearest].p;
    write_features(temporal_seq + j * kFeat, p->r, p->theta, p->phi, p->laser, phi_bar_i,
                   st.laser, sc);
  }
  return true;
}

double laep_predict(const LaepModel& m, const TreeState& st, double r_bar_i, double phi_bar_i) {
  std::vector<double> seq(size_t(LaepModel::kSeq) * size_t(LaepModel::kFeat), 0.0);
  build_elevation_features(st, r_bar_i, phi_bar_i, m.scales, seq.data());
  return tree_mean_elevation(st) + m.forward(seq.data());
}

double inter_rp_predict(const InterRpModel& m, const TreeState& st, double phi_bar_i,
                        const Frame* reference) {
  std::vector<double> sseq(size_t(InterRpModel::kSeq) * 4, 0.0);
  std::vector<double> tseq(size_t(InterRpModel::kSeq) * 4, 0.0);
  std::vector<double> rseq(size_t(InterRpModel::kSeq), 0.0);
  if (!build_radius_features(st, phi_bar_i, reference, m.scales, 16, sseq.data(), tseq.data(),
                             rseq.data()))
    return dc_predict_radius(st);
  return dc_predict_radius(st) + m.forward(sseq.data(), tseq.data(), rseq.data());
}

}  // namespace slpcc

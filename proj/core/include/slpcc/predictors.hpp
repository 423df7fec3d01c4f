#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slpcc/models.hpp"
#include "slpcc/tree.hpp"

namespace slpcc {

// Reconstructed prefix of one tree while it is being coded; identical on the
// encoder and decoder sides by construction (every value has been through
// quantization). Also records the dequantized radius residuals, which feed
// the radius predictor's residual neighborhood.
struct TreeState {
  int32_t laser = 0;
  double nominal_elevation = 0.0;  // sensor elevation for the empty-prefix mean
  std::vector<double> r, theta, phi;
  std::vector<double> radius_residual;  // dequantized; 0 for the root
  double theta_sum = 0.0;

  size_t size() const { return r.size(); }
  void push(double r_bar, double theta_bar, double phi_bar, double rres);
};

// Identity predictor: the previous reconstructed radius.
double dc_predict_radius(const TreeState& st);

// Causal mean of the reconstructed elevations coded so far; the laser's
// nominal elevation when the prefix is empty.
double tree_mean_elevation(const TreeState& st);

// Indices into the tree prefix of the (up to) `count` points nearest to phi
// in wrapped azimuth distance, ascending by index. Exact: the prefix is
// sorted by azimuth, so candidates live at its two ends.
std::vector<uint32_t> spatial_neighbors(const TreeState& st, double phi, size_t count);

// Tree of a frame by laser id; nullptr when the laser has no tree.
const PredictiveTree* find_tree(const Frame& frame, int32_t laser);

// Indices of the k points of `tree` nearest to phi in wrapped azimuth
// distance (entire tree, not a prefix), ascending by index.
std::vector<uint32_t> tree_azimuth_knn(const PredictiveTree& tree, double phi, size_t k);

// --- Feature builders (shared by coding and training) ---------------------

// 50 rows x 4 features: the 49 most recent prefix points (zero rows first
// when the prefix is shorter), then the virtual current point built from the
// already-known azimuth/radius reconstruction and the previous elevation.
void build_elevation_features(const TreeState& st, double r_bar_i, double phi_bar_i,
                              const FeatureScales& sc, double* seq);

// Spatial / temporal / residual sequences for the radius predictor. Returns
// false — leaving the buffers untouched — when the deterministic fallback to
// the identity predictor applies (spatial neighborhood < 4 points, or no
// usable reference tree). k temporal neighbors per reference tree.
bool build_radius_features(const TreeState& st, double phi_bar_i, const Frame* reference,
                           const FeatureScales& sc, size_t k, double* spatial_seq,
                           double* temporal_seq, double* residual_seq);

// --- Predictors ------------------------------------------------------------

// Elevation estimate: causal tree mean plus the model's correction.
double laep_predict(const LaepModel& m, const TreeState& st, double r_bar_i, double phi_bar_i);

// Radius estimate: previous reconstructed radius plus the model's correction
// when the neighborhoods exist, plain identity prediction otherwise.
double inter_rp_predict(const InterRpModel& m, const TreeState& st, double phi_bar_i,
                        const Frame* reference);

// Signed wrap of an angle difference into [-pi, pi).
double wrap_signed(double delta);

}  // namespace slpcc

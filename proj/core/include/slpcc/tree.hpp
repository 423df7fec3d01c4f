#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slpcc/sensor.hpp"

namespace slpcc {

// Per-laser chain of points sorted by azimuth; defines the coding order.
struct PredictiveTree {
  int laser = 0;
  std::vector<SphericalPoint> points;  // phi non-decreasing, stable on ties

  size_t size() const { return points.size(); }
};

// One sweep, as trees ordered by laser id. Lasers with no returns are absent.
struct Frame {
  std::vector<PredictiveTree> trees;

  size_t point_count() const {
    size_t n = 0;
    for (const auto& t : trees) n += t.size();
    return n;
  }
  // All points in tree order (the coding order), as Cartesian coordinates.
  std::vector<Vec3> to_cartesian() const;
};

// Buckets points by laser id and stable-sorts each bucket by azimuth
// (ties keep input order). Trees come out ordered by laser id.
Frame build_trees(std::span<const SphericalPoint> points);

// Convert a Cartesian cloud and build its trees. Zero-length points are
// rejected (std::invalid_argument), matching to_spherical.
Frame build_frame(std::span<const Vec3> cloud, const SensorProfile& profile);

// Indices of the (up to) `count` points of `tree` that precede `index` in
// coding order and are nearest to phi in wrapped azimuth distance. Result is
// in ascending tree order; distance ties keep the lower index.
std::vector<size_t> azimuth_neighbors(const PredictiveTree& tree, size_t index,
                                      double phi, size_t count);

}  // namespace slpcc

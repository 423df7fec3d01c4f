#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "slpcc/sensor.hpp"

namespace slpcc {

// Uniform hash grid over a fixed point set for exact nearest-neighbor
// queries. Expanding-ring search: rings of cells are scanned outward until no
// unscanned cell can hold a closer point, so results match brute force
// exactly (ties resolved toward the lower point index).
class PointGrid {
public:
  struct Hit {
    uint32_t index = 0;
    double d2 = 0.0;
  };

  PointGrid(std::span<const Vec3> points, double cell_size);

  size_t size() const { return points_.size(); }

  // Throws std::logic_error if the grid is empty.
  Hit nearest(const Vec3& q) const;

  // Up to k nearest, ascending by (distance, index). k >= 1.
  std::vector<Hit> knn(const Vec3& q, size_t k) const;

private:
  void scan_ring(const Vec3& q, int64_t cx, int64_t cy, int64_t cz, int64_t ring,
                 size_t k, std::vector<Hit>& best) const;

  double cell_;
  std::vector<Vec3> points_;
  std::unordered_map<uint64_t, std::vector<uint32_t>> cells_;
};

}  // namespace slpcc

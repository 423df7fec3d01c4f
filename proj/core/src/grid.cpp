#include "slpcc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace slpcc {

namespace {

// 21 bits per axis with a centering offset: cell indices within +-2^20.
constexpr int64_t kOffset = int64_t{1} << 20;

uint64_t cell_key(int64_t x, int64_t y, int64_t z) {
  uint64_t ux = uint64_t(x + kOffset) & 0x1fffff;
  uint64_t uy = uint64_t(y + kOffset) & 0x1fffff;
  uint64_t uz = uint64_t(z + kOffset) & 0x1fffff;
  return ux | (uy << 21) | (uz << 42);
}

int64_t cell_of(double v, double cell) { return int64_t(std::floor(v / cell)); }

// Exact linear-scan fallback with the identical (d2, index) ordering the ring
// search maintains; used when the query sits far from every occupied cell and
// ring expansion would sweep empty space.
std::vector<PointGrid::Hit> brute_knn(std::span<const Vec3> points, const Vec3& q, size_t k) {
  std::vector<PointGrid::Hit> best;
  best.reserve(k + 1);
  for (uint32_t idx = 0; idx < points.size(); ++idx) {
    const Vec3& p = points[idx];
    double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
    double d2 = dx * dx + dy * dy + dz * dz;
    if (best.size() == k &&
        (d2 > best.back().d2 || (d2 == best.back().d2 && idx >= best.back().index)))
      continue;
    PointGrid::Hit h{idx, d2};
    auto pos = std::lower_bound(best.begin(), best.end(), h,
                                [](const PointGrid::Hit& a, const PointGrid::Hit& b) {
                                  return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
                                });
    best.insert(pos, h);
    if (best.size() > k) best.pop_back();
  }
  return best;
}

}  // namespace

PointGrid::PointGrid(std::span<const Vec3> points, double cell_size)
    : cell_(cell_size), points_(points.begin(), points.end()) {
  if (cell_size <= 0.0) throw std::invalid_argument("point grid: cell size must be positive");
  cells_.reserve(points_.size());
  for (uint32_t i = 0; i < points_.size(); ++i) {
    const Vec3& p = points_[i];
    cells_[cell_key(cell_of(p.x, cell_), cell_of(p.y, cell_), cell_of(p.z, cell_))].push_back(i);
  }
}

void PointGrid::scan_ring(const Vec3& q, int64_t cx, int64_t cy, int64_t cz, int64_t ring,
                          size_t k, std::vector<Hit>& best) const {
  auto visit = [&](int64_t x, int64_t y, int64_t z) {
    auto it = cells_.find(cell_key(x, y, z));
    if (it == cells_.end()) return;
    for (uint32_t idx : it->second) {
      const Vec3& p = points_[idx];
      double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
      double d2 = dx * dx + dy * dy + dz * dz;
      // Keep the k best ordered by (d2, index); linear insert, k is small.
      if (best.size() == k && (d2 > best.back().d2 ||
                               (d2 == best.back().d2 && idx >= best.back().index)))
        continue;
      Hit h{idx, d2};
      auto pos = std::lower_bound(best.begin(), best.end(), h, [](const Hit& a, const Hit& b) {
        return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
      });
      best.insert(pos, h);
      if (best.size() > k) best.pop_back();
    }
  };

  if (ring == 0) {
    visit(cx, cy, cz);
    return;
  }
  for (int64_t x = cx - ring; x <= cx + ring; ++x) {
    for (int64_t y = cy - ring; y <= cy + ring; ++y) {
      bool face_xy = (x == cx - ring || x == cx + ring || y == cy - ring || y == cy + ring);
      if (face_xy) {
        for (int64_t z = cz - ring; z <= cz + ring; ++z) visit(x, y, z);
      } else {
        visit(x, y, cz - ring);
        visit(x, y, cz + ring);
      }
    }
  }
}

std::vector<PointGrid::Hit> PointGrid::knn(const Vec3& q, size_t k) const {
  if (k == 0 || points_.empty()) return {};
  k = std::min(k, points_.size());

  int64_t cx = cell_of(q.x, cell_), cy = cell_of(q.y, cell_), cz = cell_of(q.z, cell_);
  std::vector<Hit> best;
  best.reserve(k + 1);
  // Ring expansion pays off only while the rings it sweeps are mostly
  // occupied; once more cells were visited than a full linear scan would
  // cost, fall back to that scan (bit-identical ordering).
  const uint64_t cell_budget = 4 * uint64_t(points_.size()) + 64;
  uint64_t visited = 0;
  for (int64_t ring = 0;; ++ring) {
    // Any point in an unscanned ring r' >= ring is at distance >= (ring-1)*cell
    // from q; once the current k-th best strictly beats that bound, the result
    // is exact (strict, so boundary ties still resolve by index order).
    if (best.size() == k && ring >= 1) {
      double safe = double(ring - 1) * cell_;
      if (best.back().d2 < safe * safe) break;
    }
    visited += ring == 0 ? 1 : uint64_t(24 * ring * ring + 2);
    if (visited > cell_budget) return brute_knn(points_, q, k);
    scan_ring(q, cx, cy, cz, ring, k, best);
    if (ring > (int64_t{1} << 21)) throw std::logic_error("point grid: search diverged");
  }
  return best;
}

PointGrid::Hit PointGrid::nearest(const Vec3& q) const {
  if (points_.empty()) throw std::logic_error("point grid: query on empty grid");
  return knn(q, 1).front();
}

}  // namespace slpcc

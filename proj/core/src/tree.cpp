#include "slpcc/tree.hpp"

#include <algorithm>
#include <map>

namespace slpcc {

std::vector<Vec3> Frame::to_cartesian() const {
  std::vector<Vec3> out;
  out.reserve(point_count());
  for (const auto& t : trees)
    for (const auto& p : t.points) out.push_back(slpcc::to_cartesian(p));
  return out;
}

Frame build_trees(std::span<const SphericalPoint> points) {
  std::map<int, PredictiveTree> by_laser;
  for (const auto& p : points) {
    auto& tree = by_laser[p.laser];
    tree.laser = p.laser;
    tree.points.push_back(p);
  }
  Frame frame;
  frame.trees.reserve(by_laser.size());
  for (auto& [laser, tree] : by_laser) {
    std::stable_sort(tree.points.begin(), tree.points.end(),
                     [](const SphericalPoint& a, const SphericalPoint& b) { return a.phi < b.phi; });
    frame.trees.push_back(std::move(tree));
  }
  return frame;
}

Frame build_frame(std::span<const Vec3> cloud, const SensorProfile& profile) {
  std::vector<SphericalPoint> points;
  points.reserve(cloud.size());
  for (const auto& v : cloud) points.push_back(to_spherical(v, profile));
  return build_trees(points);
}

std::vector<size_t> azimuth_neighbors(const PredictiveTree& tree, size_t index,
                                      double phi, size_t count) {
  size_t n = std::min(index, tree.size());
  std::vector<std::pair<double, size_t>> cand;
  cand.reserve(n);
  for (size_t j = 0; j < n; ++j)
    cand.emplace_back(wrapped_distance(tree.points[j].phi, phi), j);
  size_t k = std::min(count, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + ptrdiff_t(k), cand.end());
  std::vector<size_t> out(k);
  for (size_t i = 0; i < k; ++i) out[i] = cand[i].second;
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace slpcc

#include "doctest.h"

#include <algorithm>

#include "slpcc/rng.hpp"
#include "slpcc/tree.hpp"

using namespace slpcc;

TEST_CASE("tree: build sorts per laser and orders trees by id") {
  std::vector<SphericalPoint> pts = {
      {1.0, 0.0, 0.2, 0},
      {1.0, 0.0, 0.1, 0},
      {1.0, 0.0, 0.0, 1},
  };
  auto frame = build_trees(pts);
  REQUIRE(frame.trees.size() == 2);
  CHECK(frame.trees[0].laser == 0);
  CHECK(frame.trees[0].points[0].phi == 0.1);
  CHECK(frame.trees[0].points[1].phi == 0.2);
  CHECK(frame.trees[1].laser == 1);
  CHECK(frame.trees[1].points[0].phi == 0.0);
  CHECK(frame.point_count() == 3);
}

TEST_CASE("tree: stable sort keeps input order of equal azimuths") {
  std::vector<SphericalPoint> pts = {
      {5.0, 0.0, 0.3, 2},
      {6.0, 0.0, 0.3, 2},
      {7.0, 0.0, 0.3, 2},
  };
  auto frame = build_trees(pts);
  REQUIRE(frame.trees.size() == 1);
  CHECK(frame.trees[0].points[0].r == 5.0);
  CHECK(frame.trees[0].points[1].r == 6.0);
  CHECK(frame.trees[0].points[2].r == 7.0);
}

TEST_CASE("tree: build preserves the point multiset") {
  Rng rng(11);
  std::vector<SphericalPoint> pts;
  double radius_sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    SphericalPoint p{rng.uniform_real(1, 50), rng.uniform_real(-0.4, 0.1),
                     rng.uniform_real(0, kTwoPi), int(rng.uniform_int(0, 15))};
    radius_sum += p.r;
    pts.push_back(p);
  }
  auto frame = build_trees(pts);
  CHECK(frame.point_count() == 1000);
  double sum = 0.0;
  for (const auto& t : frame.trees) {
    CHECK(std::is_sorted(t.points.begin(), t.points.end(),
                         [](auto& a, auto& b) { return a.phi < b.phi; }));
    for (const auto& p : t.points) {
      CHECK(p.laser == t.laser);
      sum += p.r;
    }
  }
  CHECK(sum == doctest::Approx(radius_sum).epsilon(1e-12));
}

TEST_CASE("tree: azimuth neighbors basics") {
  PredictiveTree tree;
  tree.laser = 0;
  for (double phi : {0.0, 0.1, 0.2}) tree.points.push_back({1.0, 0.0, phi, 0});

  // Exact hit among the already-coded prefix.
  auto n = azimuth_neighbors(tree, 2, 0.1, 1);
  REQUIRE(n.size() == 1);
  CHECK(n[0] == 1);

  // Wrap-around: a query near 2*pi is close to the point at 0.
  auto w = azimuth_neighbors(tree, 3, 6.28, 1);
  REQUIRE(w.size() == 1);
  CHECK(w[0] == 0);

  // Saturation: k larger than the prefix returns the whole prefix.
  auto all = azimuth_neighbors(tree, 3, 0.05, 10);
  CHECK(all == std::vector<size_t>{0, 1, 2});

  // Only points preceding `index` qualify.
  auto none = azimuth_neighbors(tree, 0, 0.1, 4);
  CHECK(none.empty());
}

TEST_CASE("tree: azimuth neighbors match brute force") {
  Rng rng(23);
  PredictiveTree tree;
  tree.laser = 3;
  std::vector<SphericalPoint> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({1.0, 0.0, rng.uniform_real(0, kTwoPi), 3});
  auto frame = build_trees(pts);
  tree = frame.trees[0];

  for (int trial = 0; trial < 50; ++trial) {
    size_t index = size_t(rng.uniform_int(0, int64_t(tree.size())));
    double query = rng.uniform_real(0, kTwoPi);
    size_t k = size_t(rng.uniform_int(1, 60));

    std::vector<std::pair<double, size_t>> brute;
    for (size_t j = 0; j < index; ++j)
      brute.emplace_back(wrapped_distance(tree.points[j].phi, query), j);
    std::sort(brute.begin(), brute.end());
    brute.resize(std::min(k, brute.size()));
    std::vector<size_t> want;
    for (auto& [d, j] : brute) want.push_back(j);
    std::sort(want.begin(), want.end());

    CHECK(azimuth_neighbors(tree, index, query, k) == want);
  }
}

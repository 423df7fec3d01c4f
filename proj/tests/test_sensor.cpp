#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "slpcc/rng.hpp"
#include "slpcc/sensor.hpp"

using namespace slpcc;

namespace {
SensorProfile test_profile() { return SensorProfile(0.0016, {-0.1, 0.0, 0.1}); }
}  // namespace

TEST_CASE("sensor: axis-aligned conversions") {
  auto prof = test_profile();
  auto s = to_spherical({1, 0, 0}, prof);
  CHECK(s.r == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.theta == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s.phi == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s.laser == 1);

  auto c = to_cartesian(SphericalPoint{1, 0, 0, 0});
  CHECK(c.x == doctest::Approx(1.0));
  CHECK(c.y == doctest::Approx(0.0));
  CHECK(c.z == doctest::Approx(0.0));

  auto zero = to_cartesian(SphericalPoint{0, 0.3, 1.0, 0});
  CHECK(zero.x == 0.0);
  CHECK(zero.y == 0.0);
  CHECK(zero.z == 0.0);
}

TEST_CASE("sensor: pythagorean triple") {
  auto prof = test_profile();
  auto s = to_spherical({3, 4, 0}, prof);
  CHECK(s.r == doctest::Approx(5.0).epsilon(1e-15));
  // atan2(4, 3), hand-checked
  CHECK(s.phi == doctest::Approx(0.9272952180016122).epsilon(1e-15));
  auto back = to_cartesian(s);
  CHECK(std::fabs(back.x - 3.0) < 1e-9);
  CHECK(std::fabs(back.y - 4.0) < 1e-9);
  CHECK(std::fabs(back.z - 0.0) < 1e-9);
}

TEST_CASE("sensor: pole point keeps a laser id") {
  // Elevation far above every nominal row still snaps to the nearest laser;
  // points are never dropped.
  auto prof = test_profile();
  auto s = to_spherical({0, 0, 1}, prof);
  CHECK(s.theta == doctest::Approx(kPi / 2));
  CHECK(s.laser == 2);
}

TEST_CASE("sensor: origin rejected") {
  auto prof = test_profile();
  CHECK_THROWS_AS(to_spherical({0, 0, 0}, prof), std::invalid_argument);
}

TEST_CASE("sensor: nearest laser and tie break") {
  auto prof = test_profile();
  CHECK(prof.nearest_laser(0.04) == 1);
  CHECK(prof.nearest_laser(0.05) == 1);  // exact tie -> lower id
  CHECK(prof.nearest_laser(-0.05) == 0);
  CHECK(prof.nearest_laser(-2.0) == 0);
  CHECK(prof.nearest_laser(2.0) == 2);
  // Idempotent: a snapped elevation maps to its own row.
  for (int id = 0; id < prof.laser_count(); ++id)
    CHECK(prof.nearest_laser(prof.elevation(id)) == id);
}

TEST_CASE("sensor: azimuth wrapping into [0, 2pi)") {
  auto prof = test_profile();
  auto s = to_spherical({1, -1e-9, 0}, prof);
  CHECK(s.phi >= 0.0);
  CHECK(s.phi < kTwoPi);
  CHECK(wrap_angle(-0.1) == doctest::Approx(kTwoPi - 0.1));
  CHECK(wrap_angle(kTwoPi) == 0.0);
  CHECK(wrapped_distance(0.001, kTwoPi - 0.001) == doctest::Approx(0.002));
}

TEST_CASE("sensor: round trip property") {
  auto prof = SensorProfile::linear(64, -0.42, 0.03, 0.0016);
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    Vec3 p{rng.uniform_real(-100, 100), rng.uniform_real(-100, 100), rng.uniform_real(-10, 10)};
    if (p.norm() < 1e-6) continue;
    auto back = to_cartesian(to_spherical(p, prof));
    double scale = std::max(1.0, p.norm());
    CHECK(std::fabs(back.x - p.x) / scale < 1e-12);
    CHECK(std::fabs(back.y - p.y) / scale < 1e-12);
    CHECK(std::fabs(back.z - p.z) / scale < 1e-12);
  }
}

TEST_CASE("sensor: profile text round trip and validation") {
  auto prof = SensorProfile::linear(8, -0.3, 0.1, 0.002);
  auto path = std::filesystem::temp_directory_path() / "slpcc_profile_test.txt";
  prof.save(path.string());
  auto loaded = SensorProfile::load(path.string());
  CHECK(loaded.laser_count() == 8);
  CHECK(loaded.azimuth_resolution() == doctest::Approx(0.002).epsilon(1e-15));
  for (int i = 0; i < 8; ++i)
    CHECK(loaded.elevation(i) == doctest::Approx(prof.elevation(i)).epsilon(1e-15));
  std::filesystem::remove(path);

  CHECK_THROWS(SensorProfile::parse("2 0.001\n0.1\n0.0\n"));   // not increasing
  CHECK_THROWS(SensorProfile::parse("3 0.001\n0.0\n0.1\n"));   // count mismatch
  CHECK_THROWS(SensorProfile::parse("2 -0.001\n0.0\n0.1\n"));  // bad resolution
  CHECK_THROWS(SensorProfile::parse(""));
  CHECK_THROWS(SensorProfile::load("/nonexistent/profile.txt"));
}

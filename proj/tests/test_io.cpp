#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "slpcc/interframe.hpp"
#include "slpcc/io.hpp"
#include "slpcc/rng.hpp"

using namespace slpcc;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "slpcc_io_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  REQUIRE(out.good());
}

void append_f32(std::vector<uint8_t>& bytes, float v) {
  uint8_t raw[4];
  std::memcpy(raw, &v, 4);
  bytes.insert(bytes.end(), raw, raw + 4);
}

}  // namespace

TEST_CASE("point files survive a round trip through float32 records") {
  Rng rng(77);
  std::vector<Vec3> cloud(10000);
  for (auto& p : cloud) {
    p = {160.0 * rng.uniform() - 80.0, 160.0 * rng.uniform() - 80.0, 8.0 * rng.uniform() - 4.0};
  }
  const auto path = temp_file("roundtrip.bin");
  write_kitti_bin(path.string(), cloud);
  CHECK(std::filesystem::file_size(path) == cloud.size() * 16);

  const std::vector<Vec3> back = read_kitti_bin(path.string());
  REQUIRE(back.size() == cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    // Exactly the float32 values that were stored, no extra rounding.
    CHECK(back[i].x == double(float(cloud[i].x)));
    CHECK(back[i].y == double(float(cloud[i].y)));
    CHECK(back[i].z == double(float(cloud[i].z)));
  }
}

TEST_CASE("ascii point lists round-trip doubles and tolerate comments") {
  Rng rng(78);
  std::vector<Vec3> cloud(500);
  for (auto& p : cloud)
    p = {160.0 * rng.uniform() - 80.0, 160.0 * rng.uniform() - 80.0, 8.0 * rng.uniform() - 4.0};
  const auto path = temp_file("roundtrip.xyz");
  write_point_text(path.string(), cloud);
  const std::vector<Vec3> back = read_point_text(path.string());
  REQUIRE(back.size() == cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    CHECK(back[i].x == cloud[i].x);  // 17 significant digits: exact doubles
    CHECK(back[i].y == cloud[i].y);
    CHECK(back[i].z == cloud[i].z);
  }

  const auto mixed = temp_file("mixed.txt");
  {
    std::ofstream out(mixed);
    out << "# header comment\n1 2 3\n4 5 6 0.25  # intensity dropped\n\n";
  }
  const auto pts = read_point_text(mixed.string());
  REQUIRE(pts.size() == 2);
  CHECK(pts[1].x == 4.0);
  CHECK(pts[1].z == 6.0);

  const auto bad = temp_file("bad.txt");
  {
    std::ofstream out(bad);
    out << "1 2\n";
  }
  CHECK_THROWS_WITH_AS(read_point_text(bad.string()), doctest::Contains("3 or 4 numbers"),
                       std::runtime_error);

  // The extension picks the format.
  const auto as_bin = temp_file("dispatch.bin");
  write_points(as_bin.string(), cloud);
  CHECK(std::filesystem::file_size(as_bin) == cloud.size() * 16);
  CHECK(read_points(as_bin.string()).size() == cloud.size());
  const auto as_text = temp_file("dispatch.xyz");
  write_points(as_text.string(), cloud);
  CHECK(read_points(as_text.string()).size() == cloud.size());
}

TEST_CASE("point files decode hand-written records, intensity ignored") {
  std::vector<uint8_t> bytes;
  append_f32(bytes, 1.5f);
  append_f32(bytes, -2.25f);
  append_f32(bytes, 0.125f);
  append_f32(bytes, 0.9f);  // intensity, dropped
  append_f32(bytes, -40.0f);
  append_f32(bytes, 7.0f);
  append_f32(bytes, 3.5f);
  append_f32(bytes, 0.1f);
  const auto path = temp_file("two_records.bin");
  write_bytes(path, bytes);

  const std::vector<Vec3> pts = read_kitti_bin(path.string());
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].x == 1.5);
  CHECK(pts[0].y == -2.25);
  CHECK(pts[0].z == 0.125);
  CHECK(pts[1].x == -40.0);
  CHECK(pts[1].y == 7.0);
  CHECK(pts[1].z == 3.5);
}

TEST_CASE("point files reject empty, missing, and truncated inputs") {
  const auto empty = temp_file("empty.bin");
  write_bytes(empty, {});
  CHECK_THROWS_WITH_AS(read_kitti_bin(empty.string()), doctest::Contains("empty"),
                       std::runtime_error);

  CHECK_THROWS_AS(read_kitti_bin(temp_file("does_not_exist.bin").string()), std::runtime_error);

  std::vector<uint8_t> bytes(20, 0);  // one record plus four stray bytes
  const auto truncated = temp_file("truncated.bin");
  write_bytes(truncated, bytes);
  CHECK_THROWS_WITH_AS(read_kitti_bin(truncated.string()),
                       doctest::Contains("truncated record at byte 16"), std::runtime_error);
}

TEST_CASE("quantization-set files parse, validate, and round-trip") {
  const QSet q = default_qset();
  const auto path = temp_file("default.qset");
  save_qset(path.string(), q);
  CHECK(load_qset(path.string()) == q);

  const QSet parsed = parse_qset(
      "# comment line\n"
      "1 2 9   # lowest rate\n"
      "2 3 18\n2 4 34\n4 15 66\n"
      "8 33 121\n8 61 172\n");
  CHECK(parsed == q);

  CHECK_THROWS(parse_qset("1 2 9"));                                  // too few values
  CHECK_THROWS(parse_qset("1 2 9 2 3 18 2 4 34 4 15 66 8 33 121 8 61 172 5"));  // too many
  CHECK_THROWS(parse_qset("1 2 9.5 2 3 18 2 4 34 4 15 66 8 33 121 8 61 172"));  // non-integer
  CHECK_THROWS(parse_qset("0 2 9 2 3 18 2 4 34 4 15 66 8 33 121 8 61 172"));    // q out of range
  CHECK_THROWS_WITH_AS(load_qset("/nonexistent/q.qset"), doctest::Contains("/nonexistent/q.qset"),
                       std::runtime_error);
}

TEST_CASE("constraint files parse, validate, and round-trip") {
  const BitrateConstraints c = BitrateConstraints::semantic_kitti();
  const auto path = temp_file("sk.constraints");
  save_constraints(path.string(), c);
  const BitrateConstraints back = load_constraints(path.string());
  for (size_t i = 0; i < c.intervals.size(); ++i) {
    CHECK(back.intervals[i].lo == c.intervals[i].lo);
    CHECK(back.intervals[i].hi == c.intervals[i].hi);
  }

  const BitrateConstraints parsed = parse_constraints(
      "# windows\n3.0 3.2\n4.0 4.3\n5.0 5.3\n5.8 6.2\n7.2 7.6\n9.0 9.4\n");
  CHECK(parsed.intervals[0].lo == 3.0);
  CHECK(parsed.intervals[5].hi == 9.4);

  CHECK_THROWS(parse_constraints("1 2 3"));  // wrong count
  CHECK_THROWS(parse_constraints(           // empty window at point 2
      "3.0 3.2\n4.3 4.0\n5.0 5.3\n5.8 6.2\n7.2 7.6\n9.0 9.4"));
}

TEST_CASE("scene spec parsing covers every key and flags mistakes") {
  const SceneSpec spec = SceneSpec::parse(
      "# a small scene\n"
      "seed = 42\n"
      "frames = 3\n"
      "height = 2.0\n"
      "ground = 1\n"
      "velocity = 0.4 0.1 0\n"
      "yaw_rate = 0.002\n"
      "\n"
      "range_noise = 0.01   # meters\n"
      "elevation_jitter = 0.0005\n"
      "arc = 1.25\n"
      "max_range = 90\n"
      "box = 5 0 1 0.5 0.5 1\n"
      "box = -3 4 0.8 1 0.25 0.8\n"
      "cylinder = 7 -2 0.3 0 2.5\n");
  CHECK(spec.seed == 42);
  CHECK(spec.frames == 3);
  CHECK(spec.height == 2.0);
  CHECK(spec.ground);
  CHECK(spec.velocity.x == 0.4);
  CHECK(spec.velocity.y == 0.1);
  CHECK(spec.yaw_rate == 0.002);
  CHECK(spec.range_noise == 0.01);
  CHECK(spec.elevation_jitter == 0.0005);
  CHECK(spec.arc == 1.25);
  CHECK(spec.max_range == 90.0);
  REQUIRE(spec.boxes.size() == 2);
  CHECK(spec.boxes[1].center.x == -3.0);
  CHECK(spec.boxes[1].half.y == 0.25);
  REQUIRE(spec.cylinders.size() == 1);
  CHECK(spec.cylinders[0].radius == 0.3);
  CHECK(spec.cylinders[0].z_hi == 2.5);

  CHECK_THROWS_WITH_AS(SceneSpec::parse("spin = 3\n"), doctest::Contains("unknown key"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(SceneSpec::parse("velocity = 1 2\n"), doctest::Contains("3 numbers"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(SceneSpec::parse("height 2\n"), doctest::Contains("key=value"),
                       std::runtime_error);
  CHECK_THROWS_AS(SceneSpec::parse("frames = 0\n"), std::invalid_argument);
  CHECK_THROWS_AS(SceneSpec::parse("arc = 7\n"), std::invalid_argument);
  CHECK_THROWS_AS(SceneSpec::parse("box = 0 0 0 1 0 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(SceneSpec::parse("cylinder = 0 0 1 2 2\n"), std::invalid_argument);
}

TEST_CASE("generated ground returns match the analytic range exactly") {
  SceneSpec spec;
  spec.frames = 1;
  spec.height = 2.0;
  spec.arc = 0.3;
  const SensorProfile profile = SensorProfile::linear(16, -0.5, -0.05, 0.01);
  const auto frames = generate_sequence(spec, profile);
  REQUIRE(frames.size() == 1);

  // Every downward laser hits the plane: floor(0.3 / 0.01) azimuth steps.
  CHECK(frames[0].point_count() == 30 * 16);
  size_t checked = 0;
  for (const auto& tree : frames[0].trees) {
    for (const auto& p : tree.points) {
      CHECK(p.laser == tree.laser);
      CHECK(p.theta == profile.elevation(tree.laser));
      // Azimuth sits exactly on the grid.
      const double k = (p.phi + 0.5 * spec.arc) / 0.01;
      CHECK(std::abs(k - std::round(k)) < 1e-9);
      // Range of a ray from height h to the plane z = 0.
      const double expected = spec.height / std::sin(-p.theta);
      CHECK(std::abs(p.r - expected) < 1e-12 * expected);
      ++checked;
    }
  }
  CHECK(checked == 30 * 16);
}

TEST_CASE("generated sequences are deterministic and static scenes repeat") {
  SceneSpec spec;
  spec.seed = 9;
  spec.frames = 3;
  spec.arc = 0.8;
  spec.range_noise = 0.02;
  spec.elevation_jitter = 0.001;
  spec.boxes.push_back({{6.0, 0.0, 1.0}, {0.6, 0.6, 1.0}});
  const SensorProfile profile = SensorProfile::linear(8, -0.4, 0.05, 0.02);

  const auto a = generate_sequence(spec, profile);
  const auto b = generate_sequence(spec, profile);
  REQUIRE(a.size() == 3);
  REQUIRE(b.size() == 3);
  for (size_t f = 0; f < a.size(); ++f) {
    REQUIRE(a[f].trees.size() == b[f].trees.size());
    for (size_t t = 0; t < a[f].trees.size(); ++t) {
      REQUIRE(a[f].trees[t].points.size() == b[f].trees[t].points.size());
      for (size_t i = 0; i < a[f].trees[t].points.size(); ++i) {
        CHECK(a[f].trees[t].points[i].r == b[f].trees[t].points[i].r);
        CHECK(a[f].trees[t].points[i].theta == b[f].trees[t].points[i].theta);
        CHECK(a[f].trees[t].points[i].phi == b[f].trees[t].points[i].phi);
      }
    }
  }
  // Noise draws differ between frames of the same run.
  bool any_difference = a[0].point_count() != a[1].point_count();
  if (!any_difference && a[0].point_count() > 0) {
    const auto& p0 = a[0].trees[0].points;
    const auto& p1 = a[1].trees[0].points;
    for (size_t i = 0; i < std::min(p0.size(), p1.size()); ++i) {
      if (p0[i].r != p1[i].r) {
        any_difference = true;
        break;
      }
    }
  }
  CHECK(any_difference);

  // Without noise or motion the scene is static: frames are identical.
  spec.range_noise = 0.0;
  spec.elevation_jitter = 0.0;
  const auto still = generate_sequence(spec, profile);
  REQUIRE(still.size() == 3);
  for (size_t f = 1; f < still.size(); ++f) {
    REQUIRE(still[f].point_count() == still[0].point_count());
    for (size_t t = 0; t < still[f].trees.size(); ++t) {
      for (size_t i = 0; i < still[f].trees[t].points.size(); ++i) {
        CHECK(still[f].trees[t].points[i].r == still[0].trees[t].points[i].r);
        CHECK(still[f].trees[t].points[i].phi == still[0].trees[t].points[i].phi);
      }
    }
  }
}

TEST_CASE("sensor motion shows up as the inverse translation of scene points") {
  SceneSpec spec;
  spec.frames = 2;
  spec.velocity = {0.4, 0.2, 0.0};
  spec.arc = kTwoPi;
  spec.boxes.push_back({{8.0, 1.0, 1.2}, {0.7, 0.7, 1.2}});
  spec.boxes.push_back({{-6.0, 5.0, 1.0}, {1.0, 0.5, 1.0}});
  spec.boxes.push_back({{2.0, -9.0, 0.9}, {0.5, 1.2, 0.9}});
  spec.cylinders.push_back({-4.0, -7.0, 0.5, 0.0, 3.0});
  spec.cylinders.push_back({10.0, -3.0, 0.4, 0.0, 2.5});
  const SensorProfile profile = SensorProfile::linear(24, -0.45, 0.1, 0.01);

  const auto frames = generate_sequence(spec, profile);
  REQUIRE(frames.size() == 2);

  // Keep object returns only; the infinite ground plane is translation
  // invariant and would anchor the registration at zero.
  const auto objects_only = [&](const Frame& f) {
    std::vector<Vec3> pts;
    for (const Vec3& p : f.to_cartesian())
      if (p.z > -spec.height + 0.3) pts.push_back(p);
    return pts;
  };
  const std::vector<Vec3> prev = objects_only(frames[0]);
  const std::vector<Vec3> cur = objects_only(frames[1]);
  REQUIRE(prev.size() > 300);
  REQUIRE(cur.size() > 300);

  const IcpResult icp = icp_register(prev, cur);
  CHECK(!icp.degenerate);
  CHECK(icp.converged);
  // A sensor step of +v moves every static return by -v in the sensor frame.
  // The two sweeps sample the surfaces at different spots, so allow a couple
  // of centimeters on top of the registration itself.
  CHECK(std::abs(icp.transform.translation.x + 0.4) < 0.02);
  CHECK(std::abs(icp.transform.translation.y + 0.2) < 0.02);
  CHECK(std::abs(icp.transform.translation.z) < 0.02);
  CHECK(std::abs(icp.transform.rotation[1]) < 5e-3);  // no spurious yaw
}

TEST_CASE("default sensor profile matches its documented shape") {
  const SensorProfile p = default_sensor_profile();
  CHECK(p.laser_count() == 64);
  CHECK(p.azimuth_resolution() == 0.0016);
  CHECK(p.elevation(0) == -0.4247);
  CHECK(p.elevation(63) == doctest::Approx(0.0349).epsilon(1e-12));
  for (int l = 1; l < 64; ++l) CHECK(p.elevation(l) > p.elevation(l - 1));
}

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slpcc/qsopt.hpp"
#include "slpcc/sensor.hpp"
#include "slpcc/tree.hpp"

namespace slpcc {

// ---------------------------------------------------------------------------
// Point files: binary little-endian float32 (x, y, z, intensity) records.
// ---------------------------------------------------------------------------

// Reads every record, dropping intensity. Throws std::runtime_error on a
// missing or empty file or a size that is not a multiple of 16 bytes (the
// message names the offset of the partial record).
std::vector<Vec3> read_kitti_bin(const std::string& path);

// Writes records with intensity zeroed, so reconstructions drop into tools
// that expect the standard layout.
void write_kitti_bin(const std::string& path, std::span<const Vec3> points);

// ASCII point lists: one point per line, three or four whitespace-separated
// numbers (x y z, optional intensity which is dropped); '#' starts a
// comment. Writing uses enough digits that doubles survive a round trip.
std::vector<Vec3> read_point_text(const std::string& path);
void write_point_text(const std::string& path, std::span<const Vec3> points);

// Picks the format from the extension: ".bin" means binary records,
// anything else the ASCII list.
std::vector<Vec3> read_points(const std::string& path);
void write_points(const std::string& path, std::span<const Vec3> points);

// ---------------------------------------------------------------------------
// QSet and bitrate-constraint text files.
// ---------------------------------------------------------------------------

// Whitespace-separated integers, three per operating point (q_phi q_theta
// q_r), lowest bitrate first; '#' starts a comment. Exactly 18 values, each
// tuple within the valid ranges.
QSet parse_qset(const std::string& text);
QSet load_qset(const std::string& path);
void save_qset(const std::string& path, const QSet& q);

// Whitespace-separated numbers, two per operating point (min max) in bits
// per input point; '#' starts a comment. Exactly 12 values forming ordered
// windows.
BitrateConstraints parse_constraints(const std::string& text);
BitrateConstraints load_constraints(const std::string& path);
void save_constraints(const std::string& path, const BitrateConstraints& c);

// The spinning-sensor geometry assumed when no profile file is given:
// 64 lasers, nominal elevations evenly spaced over [-0.4247, 0.0349] rad,
// azimuth resolution 0.0016 rad.
SensorProfile default_sensor_profile();

// ---------------------------------------------------------------------------
// Synthetic scene sequences.
// ---------------------------------------------------------------------------

// Axis-aligned box, world coordinates (meters).
struct SceneBox {
  Vec3 center{};
  Vec3 half{};  // half extents, all > 0
};

// Vertical cylinder between two heights (open ends).
struct SceneCylinder {
  double x = 0.0, y = 0.0;
  double radius = 1.0;
  double z_lo = 0.0, z_hi = 1.0;
};

// A deterministic scene: primitives in a fixed world, a sensor that starts
// at (0, 0, height) and advances by `velocity` meters and `yaw_rate` radians
// per frame, and per-ray noise. Rays sweep the azimuth grid (resolution
// steps over `arc` radians centered on 0) for every laser of the profile;
// rays that hit nothing within max_range return no point.
struct SceneSpec {
  uint64_t seed = 1;
  int frames = 2;
  double height = 1.73;           // initial sensor z over the ground plane
  bool ground = true;             // infinite plane z = 0
  std::vector<SceneBox> boxes;
  std::vector<SceneCylinder> cylinders;
  Vec3 velocity{0.0, 0.0, 0.0};   // per-frame sensor translation, world frame
  double yaw_rate = 0.0;          // per-frame sensor heading change, radians
  double range_noise = 0.0;       // sigma of additive range noise, meters
  double elevation_jitter = 0.0;  // sigma of per-ray beam elevation, radians
  double arc = kTwoPi;            // swept azimuth span, radians (0, 2*pi]
  double max_range = 120.0;       // hits beyond this are dropped, meters

  // key=value lines; '#' starts a comment. Keys: seed, frames, height,
  // ground, velocity (3 numbers), yaw_rate, range_noise, elevation_jitter,
  // arc, max_range, box (6 numbers, repeatable), cylinder (5 numbers,
  // repeatable). Unknown keys are errors.
  static SceneSpec parse(const std::string& text);
  static SceneSpec load(const std::string& path);
};

// Throws std::invalid_argument on out-of-range fields.
void validate(const SceneSpec& spec);

// Ray-casts the scene for each frame, returning points in the sensor frame
// bucketed into per-laser trees. Point radii and elevations carry the
// configured noise; azimuths lie exactly on the resolution grid. A frame
// with no returns comes back empty. Deterministic given spec.seed (double
// precision, fixed evaluation order).
std::vector<Frame> generate_sequence(const SceneSpec& spec, const SensorProfile& profile);

}  // namespace slpcc

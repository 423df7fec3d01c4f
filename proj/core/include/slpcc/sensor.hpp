#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slpcc {

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kTwoPi = 2.0 * kPi;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double squared_norm() const { return dot(*this); }
  double norm() const;
};

// One sensor return in spherical coordinates. `laser` is the index of the
// nominal elevation row the point was assigned to.
struct SphericalPoint {
  double r = 0.0;      // metres, >= 0
  double theta = 0.0;  // elevation, radians in [-pi/2, pi/2]
  double phi = 0.0;    // azimuth, radians in [0, 2*pi)
  int laser = 0;
};

// Spinning-sensor geometry: laser count, nominal per-laser elevations
// (strictly increasing), and the fixed horizontal angular step between
// consecutive firings.
class SensorProfile {
public:
  SensorProfile() = default;
  SensorProfile(double azimuth_resolution, std::vector<double> elevations);

  double azimuth_resolution() const { return azimuth_resolution_; }
  int laser_count() const { return int(elevations_.size()); }
  double elevation(int laser) const { return elevations_[size_t(laser)]; }
  const std::vector<double>& elevations() const { return elevations_; }

  // Index of the nominal elevation nearest to theta; exact ties resolve to
  // the lower index.
  int nearest_laser(double theta) const;

  // Text format: first line "<laser_count> <azimuth_resolution>", then
  // laser_count elevation values in radians. '#' starts a comment line.
  static SensorProfile load(const std::string& path);
  static SensorProfile parse(const std::string& text);
  void save(const std::string& path) const;

  // Evenly spaced test profile over [theta_lo, theta_hi].
  static SensorProfile linear(int lasers, double theta_lo, double theta_hi,
                              double azimuth_resolution);

private:
  double azimuth_resolution_ = 0.0;
  std::vector<double> elevations_;
};

// Wraps an angle into [0, 2*pi).
double wrap_angle(double phi);

// Absolute azimuth distance on the circle, in [0, pi].
double wrapped_distance(double a, double b);

// r = |p|, theta = arcsin(z/r), phi = atan2(y, x) wrapped to [0, 2*pi),
// laser = nearest nominal elevation. Throws std::invalid_argument on a
// zero-length vector.
SphericalPoint to_spherical(const Vec3& p, const SensorProfile& profile);

Vec3 to_cartesian(const SphericalPoint& p);
Vec3 to_cartesian(double r, double theta, double phi);

}  // namespace slpcc

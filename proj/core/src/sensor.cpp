#include "slpcc/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slpcc {

double Vec3::norm() const { return std::sqrt(squared_norm()); }

SensorProfile::SensorProfile(double azimuth_resolution, std::vector<double> elevations)
    : azimuth_resolution_(azimuth_resolution), elevations_(std::move(elevations)) {
  if (azimuth_resolution_ <= 0.0)
    throw std::invalid_argument("sensor profile: azimuth resolution must be positive");
  if (elevations_.empty())
    throw std::invalid_argument("sensor profile: no lasers");
  for (size_t i = 1; i < elevations_.size(); ++i)
    if (!(elevations_[i] > elevations_[i - 1]))
      throw std::invalid_argument("sensor profile: elevations must be strictly increasing");
}

int SensorProfile::nearest_laser(double theta) const {
  // Elevations are strictly increasing; compare the two bracketing rows.
  auto it = std::lower_bound(elevations_.begin(), elevations_.end(), theta);
  if (it == elevations_.begin()) return 0;
  if (it == elevations_.end()) return laser_count() - 1;
  size_t hi = size_t(it - elevations_.begin());
  size_t lo = hi - 1;
  // Ties go to the lower index.
  return (theta - elevations_[lo] <= elevations_[hi] - theta) ? int(lo) : int(hi);
}

SensorProfile SensorProfile::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> tokens;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  if (tokens.size() < 2) throw std::runtime_error("sensor profile: truncated header");
  size_t count = 0;
  double resolution = 0.0;
  try {
    count = std::stoul(tokens[0]);
    resolution = std::stod(tokens[1]);
  } catch (const std::exception&) {
    throw std::runtime_error("sensor profile: malformed header");
  }
  if (tokens.size() != 2 + count)
    throw std::runtime_error("sensor profile: expected " + std::to_string(count) +
                             " elevations, found " + std::to_string(tokens.size() - 2));
  std::vector<double> elevations(count);
  for (size_t i = 0; i < count; ++i) {
    try {
      elevations[i] = std::stod(tokens[2 + i]);
    } catch (const std::exception&) {
      throw std::runtime_error("sensor profile: malformed elevation value");
    }
  }
  return SensorProfile(resolution, std::move(elevations));
}

SensorProfile SensorProfile::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("sensor profile: cannot open " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse(buf.str());
}

void SensorProfile::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("sensor profile: cannot write " + path);
  f.precision(17);
  f << laser_count() << " " << azimuth_resolution_ << "\n";
  for (double e : elevations_) f << e << "\n";
}

SensorProfile SensorProfile::linear(int lasers, double theta_lo, double theta_hi,
                                    double azimuth_resolution) {
  if (lasers < 2) throw std::invalid_argument("sensor profile: need at least two lasers");
  std::vector<double> elevations(static_cast<size_t>(lasers), 0.0);
  for (int i = 0; i < lasers; ++i)
    elevations[size_t(i)] = theta_lo + (theta_hi - theta_lo) * double(i) / double(lasers - 1);
  return SensorProfile(azimuth_resolution, std::move(elevations));
}

double wrap_angle(double phi) {
  phi = std::fmod(phi, kTwoPi);
  if (phi < 0.0) phi += kTwoPi;
  if (phi >= kTwoPi) phi -= kTwoPi;  // fmod/addition can land exactly on 2*pi
  return phi;
}

double wrapped_distance(double a, double b) {
  double d = std::fabs(a - b);
  d = std::fmod(d, kTwoPi);
  return std::min(d, kTwoPi - d);
}

SphericalPoint to_spherical(const Vec3& p, const SensorProfile& profile) {
  double r = p.norm();
  if (!(r > 0.0)) throw std::invalid_argument("to_spherical: zero-length vector");
  double theta = std::asin(std::clamp(p.z / r, -1.0, 1.0));
  double phi = wrap_angle(std::atan2(p.y, p.x));
  return SphericalPoint{r, theta, phi, profile.nearest_laser(theta)};
}

Vec3 to_cartesian(double r, double theta, double phi) {
  double ct = std::cos(theta);
  return Vec3{r * ct * std::cos(phi), r * ct * std::sin(phi), r * std::sin(theta)};
}

Vec3 to_cartesian(const SphericalPoint& p) { return to_cartesian(p.r, p.theta, p.phi); }

}  // namespace slpcc

#include "slpcc/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "slpcc/rng.hpp"

namespace slpcc {
namespace {

static_assert(std::endian::native == std::endian::little,
              "point-file and bitstream readers assume a little-endian host");

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("io: " + path + ": " + what);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::ostringstream out;
  out << in.rdbuf();
  if (!in.good() && !in.eof()) fail(path, "read failed");
  return std::move(out).str();
}

void write_file(const std::string& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out.good()) fail(path, "write failed");
}

// Numeric tokens with '#' comments stripped; throws on anything else.
std::vector<double> numeric_tokens(const std::string& text, const std::string& origin) {
  std::vector<double> values;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string token;
    while (fields >> token) {
      size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        fail(origin, "expected a number, got '" + token + "'");
      }
      if (used != token.size()) fail(origin, "expected a number, got '" + token + "'");
      values.push_back(v);
    }
  }
  return values;
}

int32_t to_int(double v, const std::string& origin) {
  if (!(v == std::floor(v)) || std::abs(v) > 1e9) fail(origin, "expected an integer");
  return int32_t(v);
}

// ---------------------------------------------------------------------------
// Scene ray casting.
// ---------------------------------------------------------------------------

constexpr double kMinHit = 0.05;  // hits closer than the sensor shell are ignored

// Nearest positive parameter of origin + t*dir against one primitive set;
// infinity when nothing is hit.
double hit_ground(const Vec3& o, const Vec3& d) {
  if (d.z >= -1e-12 || o.z <= 0.0) return std::numeric_limits<double>::infinity();
  return -o.z / d.z;
}

double hit_box(const Vec3& o, const Vec3& d, const SceneBox& b) {
  double t_enter = 0.0, t_exit = std::numeric_limits<double>::infinity();
  const double od[3] = {o.x - b.center.x, o.y - b.center.y, o.z - b.center.z};
  const double dd[3] = {d.x, d.y, d.z};
  const double hh[3] = {b.half.x, b.half.y, b.half.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(dd[axis]) < 1e-12) {
      if (std::abs(od[axis]) > hh[axis]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double lo = (-hh[axis] - od[axis]) / dd[axis];
    double hi = (hh[axis] - od[axis]) / dd[axis];
    if (lo > hi) std::swap(lo, hi);
    t_enter = std::max(t_enter, lo);
    t_exit = std::min(t_exit, hi);
    if (t_enter > t_exit) return std::numeric_limits<double>::infinity();
  }
  return t_enter > kMinHit ? t_enter : std::numeric_limits<double>::infinity();
}

double hit_cylinder(const Vec3& o, const Vec3& d, const SceneCylinder& c) {
  const double ox = o.x - c.x, oy = o.y - c.y;
  const double a = d.x * d.x + d.y * d.y;
  if (a < 1e-12) return std::numeric_limits<double>::infinity();
  const double b = 2.0 * (ox * d.x + oy * d.y);
  const double q = ox * ox + oy * oy - c.radius * c.radius;
  const double disc = b * b - 4.0 * a * q;
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  const double root = std::sqrt(disc);
  for (const double t : {(-b - root) / (2.0 * a), (-b + root) / (2.0 * a)}) {
    if (t <= kMinHit) continue;
    const double z = o.z + t * d.z;
    if (z >= c.z_lo && z <= c.z_hi) return t;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

std::vector<Vec3> read_kitti_bin(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.empty()) fail(path, "empty point file");
  if (bytes.size() % 16 != 0)
    fail(path, "truncated record at byte " + std::to_string(bytes.size() - bytes.size() % 16) +
                   " (file size must be a multiple of 16)");
  const size_t count = bytes.size() / 16;
  std::vector<Vec3> points(count);
  for (size_t i = 0; i < count; ++i) {
    float f[4];
    std::memcpy(f, bytes.data() + i * 16, sizeof f);
    points[i] = {double(f[0]), double(f[1]), double(f[2])};
  }
  return points;
}

void write_kitti_bin(const std::string& path, std::span<const Vec3> points) {
  std::vector<char> bytes(points.size() * 16);
  for (size_t i = 0; i < points.size(); ++i) {
    const float f[4] = {float(points[i].x), float(points[i].y), float(points[i].z), 0.0f};
    std::memcpy(bytes.data() + i * 16, f, sizeof f);
  }
  write_file(path, bytes);
}

std::vector<Vec3> read_point_text(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<Vec3> points;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::vector<double> v = numeric_tokens(line, path + " line " + std::to_string(line_no));
    if (v.empty()) continue;
    if (v.size() != 3 && v.size() != 4)
      fail(path, "line " + std::to_string(line_no) + ": expected 3 or 4 numbers per point");
    points.push_back({v[0], v[1], v[2]});
  }
  if (points.empty()) fail(path, "empty point file");
  return points;
}

void write_point_text(const std::string& path, std::span<const Vec3> points) {
  std::ostringstream out;
  out.precision(17);
  for (const Vec3& p : points) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
  const std::string text = out.str();
  write_file(path, {text.data(), text.size()});
}

namespace {

bool has_bin_extension(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
}

}  // namespace

std::vector<Vec3> read_points(const std::string& path) {
  return has_bin_extension(path) ? read_kitti_bin(path) : read_point_text(path);
}

void write_points(const std::string& path, std::span<const Vec3> points) {
  if (has_bin_extension(path))
    write_kitti_bin(path, points);
  else
    write_point_text(path, points);
}

QSet parse_qset(const std::string& text) {
  const std::vector<double> v = numeric_tokens(text, "qset");
  if (v.size() != QSet::kGenes)
    throw std::runtime_error("io: qset: expected 18 values (6 operating points x 3 axes), got " +
                             std::to_string(v.size()));
  QSet q;
  for (size_t i = 0; i < QSet::kGenes; ++i) q.set_gene(i, to_int(v[i], "qset"));
  for (const QuantTuple& t : q.tuples) validate(t);
  return q;
}

QSet load_qset(const std::string& path) {
  try {
    return parse_qset(read_file(path));
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

void save_qset(const std::string& path, const QSet& q) {
  std::ostringstream out;
  out << "# q_phi q_theta q_r per operating point, lowest bitrate first\n";
  for (const QuantTuple& t : q.tuples)
    out << t.q_phi << ' ' << t.q_theta << ' ' << t.q_r << '\n';
  const std::string text = out.str();
  write_file(path, {text.data(), text.size()});
}

BitrateConstraints parse_constraints(const std::string& text) {
  const std::vector<double> v = numeric_tokens(text, "constraints");
  if (v.size() != 2 * QSet::kPoints)
    throw std::runtime_error(
        "io: constraints: expected 12 values (6 operating points x min max), got " +
        std::to_string(v.size()));
  BitrateConstraints c;
  for (size_t i = 0; i < QSet::kPoints; ++i) c.intervals[i] = {v[2 * i], v[2 * i + 1]};
  validate(c);
  return c;
}

BitrateConstraints load_constraints(const std::string& path) {
  try {
    return parse_constraints(read_file(path));
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

void save_constraints(const std::string& path, const BitrateConstraints& c) {
  std::ostringstream out;
  out << "# mean-bitrate window (min max, bits per input point) per operating point\n";
  out.precision(17);
  for (const auto& w : c.intervals) out << w.lo << ' ' << w.hi << '\n';
  const std::string text = out.str();
  write_file(path, {text.data(), text.size()});
}

SensorProfile default_sensor_profile() {
  return SensorProfile::linear(64, -0.4247, 0.0349, 0.0016);
}

SceneSpec SceneSpec::parse(const std::string& text) {
  SceneSpec spec;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  const auto numbers = [&](const std::string& value, size_t count, const std::string& key) {
    const std::vector<double> v = numeric_tokens(value, "scene spec");
    if (v.size() != count)
      throw std::runtime_error("io: scene spec line " + std::to_string(line_no) + ": '" + key +
                               "' needs " + std::to_string(count) + " numbers");
    return v;
  };
  while (std::getline(lines, line)) {
    ++line_no;
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      std::istringstream rest(line);
      std::string stray;
      if (rest >> stray)
        throw std::runtime_error("io: scene spec line " + std::to_string(line_no) +
                                 ": expected key=value");
      continue;
    }
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    std::istringstream keys(key);
    keys >> key;
    if (key == "seed") {
      spec.seed = uint64_t(numbers(value, 1, key)[0]);
    } else if (key == "frames") {
      spec.frames = int(numbers(value, 1, key)[0]);
    } else if (key == "height") {
      spec.height = numbers(value, 1, key)[0];
    } else if (key == "ground") {
      spec.ground = numbers(value, 1, key)[0] != 0.0;
    } else if (key == "velocity") {
      const auto v = numbers(value, 3, key);
      spec.velocity = {v[0], v[1], v[2]};
    } else if (key == "yaw_rate") {
      spec.yaw_rate = numbers(value, 1, key)[0];
    } else if (key == "range_noise") {
      spec.range_noise = numbers(value, 1, key)[0];
    } else if (key == "elevation_jitter") {
      spec.elevation_jitter = numbers(value, 1, key)[0];
    } else if (key == "arc") {
      spec.arc = numbers(value, 1, key)[0];
    } else if (key == "max_range") {
      spec.max_range = numbers(value, 1, key)[0];
    } else if (key == "box") {
      const auto v = numbers(value, 6, key);
      spec.boxes.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    } else if (key == "cylinder") {
      const auto v = numbers(value, 5, key);
      spec.cylinders.push_back({v[0], v[1], v[2], v[3], v[4]});
    } else {
      throw std::runtime_error("io: scene spec line " + std::to_string(line_no) +
                               ": unknown key '" + key + "'");
    }
  }
  validate(spec);
  return spec;
}

SceneSpec SceneSpec::load(const std::string& path) { return parse(read_file(path)); }

void validate(const SceneSpec& spec) {
  if (spec.frames < 1) throw std::invalid_argument("io: scene needs at least one frame");
  if (!(spec.height > 0.0)) throw std::invalid_argument("io: sensor height must be positive");
  if (!(spec.arc > 0.0 && spec.arc <= kTwoPi + 1e-12))
    throw std::invalid_argument("io: arc must be in (0, 2*pi]");
  if (!(spec.max_range > 1.0)) throw std::invalid_argument("io: max_range must exceed 1 meter");
  if (!(spec.range_noise >= 0.0) || !(spec.elevation_jitter >= 0.0))
    throw std::invalid_argument("io: noise levels must be non-negative");
  for (const SceneBox& b : spec.boxes)
    if (!(b.half.x > 0.0 && b.half.y > 0.0 && b.half.z > 0.0))
      throw std::invalid_argument("io: box half extents must be positive");
  for (const SceneCylinder& c : spec.cylinders)
    if (!(c.radius > 0.0) || !(c.z_lo < c.z_hi))
      throw std::invalid_argument("io: cylinder needs radius > 0 and z_lo < z_hi");
}

std::vector<Frame> generate_sequence(const SceneSpec& spec, const SensorProfile& profile) {
  validate(spec);
  const double res = profile.azimuth_resolution();
  const int steps = std::max(1, int(std::floor(spec.arc / res + 1e-9)));
  std::vector<Frame> frames;
  frames.reserve(size_t(spec.frames));

  for (int f = 0; f < spec.frames; ++f) {
    Rng rng(spec.seed + 0x9e3779b97f4a7c15ULL * uint64_t(f + 1));
    const Vec3 origin = Vec3{0.0, 0.0, spec.height} + spec.velocity * double(f);
    const double yaw = spec.yaw_rate * double(f);
    const double cy = std::cos(yaw), sy = std::sin(yaw);

    std::vector<SphericalPoint> points;
    points.reserve(size_t(steps) * size_t(profile.laser_count()) / 2);
    for (int a = 0; a < steps; ++a) {
      const double phi = -0.5 * spec.arc + double(a) * res;
      for (int l = 0; l < profile.laser_count(); ++l) {
        double theta = profile.elevation(l);
        if (spec.elevation_jitter > 0.0) theta += spec.elevation_jitter * rng.normal();
        // Sensor-frame ray, rotated into the world by the heading.
        const double ct = std::cos(theta);
        const Vec3 ds{ct * std::cos(phi), ct * std::sin(phi), std::sin(theta)};
        const Vec3 dw{cy * ds.x - sy * ds.y, sy * ds.x + cy * ds.y, ds.z};

        double t = std::numeric_limits<double>::infinity();
        if (spec.ground) t = std::min(t, hit_ground(origin, dw));
        for (const SceneBox& b : spec.boxes) t = std::min(t, hit_box(origin, dw, b));
        for (const SceneCylinder& c : spec.cylinders) t = std::min(t, hit_cylinder(origin, dw, c));
        if (!(t > kMinHit) || t > spec.max_range) continue;

        double r = t;
        if (spec.range_noise > 0.0) r += spec.range_noise * rng.normal();
        if (!(r > kMinHit)) continue;
        points.push_back({r, theta, phi, l});
      }
    }
    frames.push_back(build_trees(points));
  }
  return frames;
}

}  // namespace slpcc

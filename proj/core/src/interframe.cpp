#include "slpcc/interframe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "slpcc/grid.hpp"
#include "slpcc/metrics.hpp"
#include "slpcc/quant.hpp"

namespace slpcc {

double normalize_angle(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w <= -kPi) w += kTwoPi;
  if (w > kPi) w -= kTwoPi;
  return w;
}

RigidTransform RigidTransform::from_euler(double yaw, double pitch, double roll, const Vec3& t) {
  double ca = std::cos(yaw), sa = std::sin(yaw);
  double cb = std::cos(pitch), sb = std::sin(pitch);
  double cc = std::cos(roll), sc = std::sin(roll);
  RigidTransform out;
  out.rotation = {ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc,
                  sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc,
                  -sb,     cb * sc,                cb * cc};
  out.translation = t;
  return out;
}

namespace {

int32_t quantize_field(double value, const char* what) {
  double code = round_even(value / kTransformStep);
  if (std::fabs(code) > 2147483647.0)
    throw std::invalid_argument(std::string("transform: ") + what + " out of range");
  return int32_t(code);
}

void put_i32(uint8_t* out, int32_t v) {
  uint32_t u = uint32_t(v);
  out[0] = uint8_t(u & 0xff);
  out[1] = uint8_t((u >> 8) & 0xff);
  out[2] = uint8_t((u >> 16) & 0xff);
  out[3] = uint8_t((u >> 24) & 0xff);
}

int32_t get_i32(const uint8_t* in) {
  uint32_t u = uint32_t(in[0]) | uint32_t(in[1]) << 8 | uint32_t(in[2]) << 16 |
               uint32_t(in[3]) << 24;
  return int32_t(u);
}

// Euler angles (z, y, x) of a rotation matrix, yaw/roll via atan2 and pitch
// via asin; the gimbal-lock branch pins roll to zero.
void euler_of(const std::array<double, 9>& m, double& yaw, double& pitch, double& roll) {
  double sb = -m[6];
  sb = std::clamp(sb, -1.0, 1.0);
  pitch = std::asin(sb);
  if (std::fabs(sb) > 1.0 - 1e-12) {
    roll = 0.0;
    yaw = std::atan2(-m[1], m[4]);
  } else {
    yaw = std::atan2(m[3], m[0]);
    roll = std::atan2(m[7], m[8]);
  }
}

}  // namespace

std::array<uint8_t, kTransformBytes> serialize_transform(const RigidTransform& t) {
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  euler_of(t.rotation, yaw, pitch, roll);
  std::array<uint8_t, kTransformBytes> out{};
  put_i32(out.data() + 0, quantize_field(normalize_angle(yaw), "yaw"));
  put_i32(out.data() + 4, quantize_field(normalize_angle(pitch), "pitch"));
  put_i32(out.data() + 8, quantize_field(normalize_angle(roll), "roll"));
  put_i32(out.data() + 12, quantize_field(t.translation.x, "translation x"));
  put_i32(out.data() + 16, quantize_field(t.translation.y, "translation y"));
  put_i32(out.data() + 20, quantize_field(t.translation.z, "translation z"));
  return out;
}

RigidTransform parse_transform(std::span<const uint8_t> bytes) {
  if (bytes.size() != kTransformBytes)
    throw std::invalid_argument("transform: expected 24 bytes");
  double yaw = double(get_i32(bytes.data() + 0)) * kTransformStep;
  double pitch = double(get_i32(bytes.data() + 4)) * kTransformStep;
  double roll = double(get_i32(bytes.data() + 8)) * kTransformStep;
  Vec3 t{double(get_i32(bytes.data() + 12)) * kTransformStep,
         double(get_i32(bytes.data() + 16)) * kTransformStep,
         double(get_i32(bytes.data() + 20)) * kTransformStep};
  return RigidTransform::from_euler(yaw, pitch, roll, t);
}

RigidTransform quantize_transform(const RigidTransform& t) {
  auto bytes = serialize_transform(t);
  return parse_transform(bytes);
}

std::vector<Vec3> apply_transform(const RigidTransform& t, std::span<const Vec3> points) {
  std::vector<Vec3> out(points.size());
  for (size_t i = 0; i < points.size(); ++i) out[i] = t.apply(points[i]);
  return out;
}

std::vector<double> radius_variances(const Frame& frame, int laser_count) {
  if (laser_count <= 0) throw std::invalid_argument("partition: laser count must be positive");
  std::vector<double> var(size_t(laser_count), 0.0);
  for (const auto& tree : frame.trees) {
    if (tree.laser < 0 || tree.laser >= laser_count)
      throw std::invalid_argument("partition: tree laser id outside the sensor profile");
    const size_t n = tree.size();
    if (n < 2) continue;
    double mean = 0.0;
    for (const auto& p : tree.points) mean += p.r;
    mean /= double(n);
    double acc = 0.0;
    for (const auto& p : tree.points) acc += (p.r - mean) * (p.r - mean);
    var[size_t(tree.laser)] = acc / double(n);
  }
  return var;
}

int32_t partition_split(std::span<const double> variances, double tau) {
  if (variances.empty()) throw std::invalid_argument("partition: no variances");
  if (!(tau > 0.0)) throw std::invalid_argument("partition: tau must be positive");
  for (size_t i = 0; i + 1 < variances.size(); ++i)
    if (variances[i] > tau && variances[i + 1] > tau) return int32_t(i) - 1;
  return int32_t(variances.size()) - 1;
}

FrameSplit split_frame(const Frame& frame, int32_t split) {
  FrameSplit out;
  for (const auto& tree : frame.trees)
    (tree.laser <= split ? out.lower : out.upper).trees.push_back(tree);
  return out;
}

FrameDecision frame_decision(std::span<const Vec3> current_upper,
                             std::span<const Vec3> reference_upper, double threshold_db,
                             double peak) {
  FrameDecision d;
  if (current_upper.empty() || reference_upper.empty()) return d;  // intra
  d.psnr = d1_psnr(reference_upper, current_upper, peak);
  d.kind = d.psnr >= threshold_db ? FrameKind::kPredicted : FrameKind::kIntra;
  return d;
}

IcpResult icp_register(std::span<const Vec3> source, std::span<const Vec3> target,
                       int max_iterations, double tolerance) {
  IcpResult result;
  if (source.size() < 100 || target.size() < 100) {
    result.degenerate = true;
    return result;
  }

  PointGrid target_grid(target, 1.0);
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d tr = Eigen::Vector3d::Zero();
  double prev_mse = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iterations; ++iter) {
    result.iterations = iter + 1;

    // Correspondences under the current transform.
    const size_t n = source.size();
    std::vector<Eigen::Vector3d> src(n), dst(n);
    Eigen::Vector3d cs = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < n; ++i) {
      Eigen::Vector3d p = R * Eigen::Vector3d(source[i].x, source[i].y, source[i].z) + tr;
      PointGrid::Hit hit = target_grid.nearest(Vec3{p.x(), p.y(), p.z()});
      const Vec3& q = target[hit.index];
      src[i] = p;
      dst[i] = Eigen::Vector3d(q.x, q.y, q.z);
      cs += src[i];
      ct += dst[i];
    }
    cs /= double(n);
    ct /= double(n);

    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (size_t i = 0; i < n; ++i) H += (src[i] - cs) * (dst[i] - ct).transpose();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv(1) > 1e-12 * std::max(sv(0), 1e-300))) {
      // Collinear or collapsed correspondences: rotation underdetermined.
      result.degenerate = true;
      result.transform = RigidTransform::identity();
      return result;
    }
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    Eigen::Matrix3d R_step = svd.matrixV() * D * svd.matrixU().transpose();
    Eigen::Vector3d t_step = ct - R_step * cs;

    R = R_step * R;
    tr = R_step * tr + t_step;

    std::vector<double> sq(n, 0.0);
    for (size_t i = 0; i < n; ++i) sq[i] = (R_step * src[i] + t_step - dst[i]).squaredNorm();
    result.mse = pairwise_sum(sq) / double(n);
    if (std::fabs(prev_mse - result.mse) < tolerance) {
      result.converged = true;
      break;
    }
    prev_mse = result.mse;
  }

  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) result.transform.rotation[size_t(3 * r + c)] = R(r, c);
  result.transform.translation = Vec3{tr.x(), tr.y(), tr.z()};
  return result;
}

}  // namespace slpcc

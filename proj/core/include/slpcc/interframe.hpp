#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "slpcc/tree.hpp"

namespace slpcc {

// Rigid motion p -> R*p + t. The rotation is kept as a row-major 3x3 matrix;
// it travels in the bitstream as three Euler angles (z, y, x order) plus the
// translation, each quantized to 1e-6.
struct RigidTransform {
  std::array<double, 9> rotation = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 translation;

  Vec3 apply(const Vec3& p) const {
    const auto& m = rotation;
    return Vec3{m[0] * p.x + m[1] * p.y + m[2] * p.z + translation.x,
                m[3] * p.x + m[4] * p.y + m[5] * p.z + translation.y,
                m[6] * p.x + m[7] * p.y + m[8] * p.z + translation.z};
  }

  static RigidTransform identity() { return {}; }
  // R = Rz(yaw) * Ry(pitch) * Rx(roll).
  static RigidTransform from_euler(double yaw, double pitch, double roll, const Vec3& t);
};

// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

inline constexpr size_t kTransformBytes = 24;  // six little-endian int32 fields
inline constexpr double kTransformStep = 1e-6;  // radians / meters per code unit

// Three Euler angles then three translations, each rounded to the nearest
// 1e-6 unit as a little-endian int32. Throws std::invalid_argument when a
// translation exceeds the representable range.
std::array<uint8_t, kTransformBytes> serialize_transform(const RigidTransform& t);
RigidTransform parse_transform(std::span<const uint8_t> bytes);

// What the encoder must apply so both sides use identical motion: the
// transform as the decoder will reconstruct it from the serialized fields.
RigidTransform quantize_transform(const RigidTransform& t);

std::vector<Vec3> apply_transform(const RigidTransform& t, std::span<const Vec3> points);

// --- Radius-variance partition ---------------------------------------------

// Population variance of each tree's radii, indexed by laser id; lasers with
// no points (or a single point) get 0.
std::vector<double> radius_variances(const Frame& frame, int laser_count);

// Largest laser id assigned to the lower (static) part: one below the
// smallest index whose variance and successor variance both exceed tau; all
// lasers when no such index exists. -1 means everything is upper.
int32_t partition_split(std::span<const double> variances, double tau);

struct FrameSplit {
  Frame lower, upper;
};

// Trees with laser id <= split go to the lower part. Decoders call this with
// the coded split index; variances are never recomputed.
FrameSplit split_frame(const Frame& frame, int32_t split);

// --- Intra/predicted decision ----------------------------------------------

enum class FrameKind : uint8_t { kIntra = 0, kPredicted = 1 };

struct FrameDecision {
  FrameKind kind = FrameKind::kIntra;
  double psnr = 0.0;  // point-to-point PSNR of the upper parts, dB
};

// Predicted iff both clouds are nonempty and their point-to-point PSNR
// reaches the threshold.
FrameDecision frame_decision(std::span<const Vec3> current_upper,
                             std::span<const Vec3> reference_upper, double threshold_db,
                             double peak);

// --- Iterative closest point -----------------------------------------------

struct IcpResult {
  RigidTransform transform;    // maps source toward target
  bool degenerate = false;     // too few points or rank-deficient solve; identity
  bool converged = false;      // mean-squared-error change fell below the tolerance
  int iterations = 0;
  double mse = 0.0;            // final correspondence MSE, m^2
};

// Point-to-point registration: nearest-neighbor correspondences on a 1 m
// grid, closed-form rigid solve per iteration, at most `max_iterations`
// rounds, stopping when the correspondence MSE changes by less than
// `tolerance` (m^2). Fewer than 100 points on either side, or a collinear /
// collapsed correspondence set, yields the identity with the degenerate flag.
IcpResult icp_register(std::span<const Vec3> source, std::span<const Vec3> target,
                       int max_iterations = 30, double tolerance = 1e-6);

}  // namespace slpcc

#include "slpcc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "slpcc/grid.hpp"

namespace slpcc {

double pairwise_sum(std::span<const double> values) {
  const size_t n = values.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  size_t half = n / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

constexpr double kMetricCell = 1.0;  // meters; exactness does not depend on it

void require_nonempty(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("metrics: empty point cloud");
}

double psnr_from_mse(double mse, double peak) {
  if (peak <= 0.0) throw std::invalid_argument("metrics: peak must be positive");
  if (mse <= 0.0) return kPsnrSentinel;
  return 10.0 * std::log10(3.0 * peak * peak / mse);
}

// Mean squared nearest-neighbor error from each point of `from` into `to`.
// With `normals` (per point of `to`), errors are projected onto the normal at
// the matched point; a zero normal keeps the unprojected distance.
double directional_mse(std::span<const Vec3> from, const PointGrid& to_grid,
                       std::span<const Vec3> to, const std::vector<Vec3>* normals) {
  std::vector<double> sq(from.size(), 0.0);
  for (size_t i = 0; i < from.size(); ++i) {
    PointGrid::Hit hit = to_grid.nearest(from[i]);
    if (normals != nullptr) {
      const Vec3& n = (*normals)[hit.index];
      if (n.squared_norm() > 0.0) {
        Vec3 e = from[i] - to[hit.index];
        double proj = e.dot(n);
        sq[i] = proj * proj;
        continue;
      }
    }
    sq[i] = hit.d2;
  }
  return pairwise_sum(sq) / double(from.size());
}

double directional_mean_distance(std::span<const Vec3> from, const PointGrid& to_grid) {
  std::vector<double> d(from.size(), 0.0);
  for (size_t i = 0; i < from.size(); ++i) d[i] = std::sqrt(to_grid.nearest(from[i]).d2);
  return pairwise_sum(d) / double(from.size());
}

}  // namespace

double d1_psnr(std::span<const Vec3> reference, std::span<const Vec3> reconstructed, double peak) {
  require_nonempty(reference, reconstructed);
  PointGrid ref_grid(reference, kMetricCell);
  PointGrid rec_grid(reconstructed, kMetricCell);
  double fwd = directional_mse(reference, rec_grid, reconstructed, nullptr);
  double bwd = directional_mse(reconstructed, ref_grid, reference, nullptr);
  return psnr_from_mse(std::max(fwd, bwd), peak);
}

std::vector<Vec3> estimate_normals(std::span<const Vec3> cloud, size_t k) {
  PointGrid grid(cloud, kMetricCell);
  std::vector<Vec3> normals(cloud.size(), Vec3{0.0, 0.0, 0.0});
  for (size_t i = 0; i < cloud.size(); ++i) {
    auto hits = grid.knn(cloud[i], k);
    if (hits.size() < 3) continue;
    Vec3 centroid{0.0, 0.0, 0.0};
    for (const auto& h : hits) centroid = centroid + cloud[h.index];
    centroid = centroid * (1.0 / double(hits.size()));
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& h : hits) {
      Vec3 d = cloud[h.index] - centroid;
      Eigen::Vector3d v(d.x, d.y, d.z);
      cov += v * v.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // Eigenvalues ascend. A plane fit needs spread in two directions: the
    // middle eigenvalue must carry a non-negligible share of the largest.
    double l_max = eig.eigenvalues()[2];
    double l_mid = eig.eigenvalues()[1];
    if (l_max <= 0.0 || l_mid <= 1e-9 * l_max) continue;
    Eigen::Vector3d n = eig.eigenvectors().col(0);
    // Deterministic orientation: first nonzero component positive.
    double lead = n.x() != 0.0 ? n.x() : (n.y() != 0.0 ? n.y() : n.z());
    if (lead < 0.0) n = -n;
    normals[i] = Vec3{n.x(), n.y(), n.z()};
  }
  return normals;
}

double d2_psnr(std::span<const Vec3> reference, std::span<const Vec3> reconstructed, double peak) {
  require_nonempty(reference, reconstructed);
  std::vector<Vec3> normals = estimate_normals(reference, 9);
  PointGrid ref_grid(reference, kMetricCell);
  PointGrid rec_grid(reconstructed, kMetricCell);

  // Reference -> reconstruction: each reference point projects its error onto
  // its own normal.
  std::vector<double> sq(reference.size(), 0.0);
  for (size_t i = 0; i < reference.size(); ++i) {
    PointGrid::Hit hit = rec_grid.nearest(reference[i]);
    const Vec3& n = normals[i];
    if (n.squared_norm() > 0.0) {
      Vec3 e = reference[i] - reconstructed[hit.index];
      double proj = e.dot(n);
      sq[i] = proj * proj;
    } else {
      sq[i] = hit.d2;
    }
  }
  double fwd = pairwise_sum(sq) / double(reference.size());
  // Reconstruction -> reference: the normal of the matched reference point.
  double bwd = directional_mse(reconstructed, ref_grid, reference, &normals);
  return psnr_from_mse(std::max(fwd, bwd), peak);
}

double chamfer(std::span<const Vec3> reference, std::span<const Vec3> reconstructed) {
  require_nonempty(reference, reconstructed);
  PointGrid ref_grid(reference, kMetricCell);
  PointGrid rec_grid(reconstructed, kMetricCell);
  return 0.5 * (directional_mean_distance(reference, rec_grid) +
                directional_mean_distance(reconstructed, ref_grid));
}

// --- Monotone piecewise-cubic interpolation --------------------------------

MonotoneCubic::MonotoneCubic(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("interpolant: need >= 2 matching knots");
  for (size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1]))
      throw std::invalid_argument("interpolant: x must be strictly increasing");
  x_.assign(x.begin(), x.end());
  y_.assign(y.begin(), y.end());

  const size_t n = x_.size();
  std::vector<double> h(n - 1, 0.0), slope(n - 1, 0.0);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    slope[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = slope[0];
    return;
  }
  // Interior: weighted harmonic mean of adjacent secants, zero at sign
  // changes or flats, so the interpolant never overshoots the data.
  for (size_t i = 1; i + 1 < n; ++i) {
    if (slope[i - 1] == 0.0 || slope[i] == 0.0 || (slope[i - 1] > 0.0) != (slope[i] > 0.0)) {
      d_[i] = 0.0;
    } else {
      double w1 = 2.0 * h[i] + h[i - 1];
      double w2 = h[i] + 2.0 * h[i - 1];
      d_[i] = (w1 + w2) / (w1 / slope[i - 1] + w2 / slope[i]);
    }
  }
  // Endpoints: one-sided three-point estimate, limited to preserve shape.
  auto edge_derivative = [](double h0, double h1, double s0, double s1) {
    double d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    auto sign = [](double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); };
    if (sign(d) != sign(s0)) return 0.0;
    if (sign(s0) != sign(s1) && std::fabs(d) > 3.0 * std::fabs(s0)) return 3.0 * s0;
    return d;
  };
  d_[0] = edge_derivative(h[0], h[1], slope[0], slope[1]);
  d_[n - 1] = edge_derivative(h[n - 2], h[n - 3], slope[n - 2], slope[n - 3]);
}

namespace {

// Hermite cubic on one segment, in the local parameter t in [0, 1].
double hermite(double t, double y0, double y1, double m0, double m1) {
  double t2 = t * t, t3 = t2 * t;
  return y0 * (2.0 * t3 - 3.0 * t2 + 1.0) + m0 * (t3 - 2.0 * t2 + t) +
         y1 * (-2.0 * t3 + 3.0 * t2) + m1 * (t3 - t2);
}

// Antiderivative (in t) of the Hermite basis combination above, zero at t=0.
double hermite_antiderivative(double t, double y0, double y1, double m0, double m1) {
  double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
  return y0 * (0.5 * t4 - t3 + t) + m0 * (0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2) +
         y1 * (-0.5 * t4 + t3) + m1 * (0.25 * t4 - t3 / 3.0);
}

}  // namespace

double MonotoneCubic::operator()(double x) const {
  if (x <= x_.front()) return y_.front();
  if (x >= x_.back()) return y_.back();
  size_t i = size_t(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
  double h = x_[i + 1] - x_[i];
  double t = (x - x_[i]) / h;
  return hermite(t, y_[i], y_[i + 1], d_[i] * h, d_[i + 1] * h);
}

double MonotoneCubic::integrate(double lo, double hi) const {
  if (lo > hi) throw std::invalid_argument("interpolant: integrate needs lo <= hi");
  if (lo < x_.front() - 1e-12 || hi > x_.back() + 1e-12)
    throw std::invalid_argument("interpolant: integration range outside knots");
  lo = std::clamp(lo, x_.front(), x_.back());
  hi = std::clamp(hi, x_.front(), x_.back());
  double total = 0.0;
  for (size_t i = 0; i + 1 < x_.size(); ++i) {
    double a = std::max(lo, x_[i]);
    double b = std::min(hi, x_[i + 1]);
    if (a >= b) continue;
    double h = x_[i + 1] - x_[i];
    double t0 = (a - x_[i]) / h;
    double t1 = (b - x_[i]) / h;
    double m0 = d_[i] * h, m1 = d_[i + 1] * h;
    total += h * (hermite_antiderivative(t1, y_[i], y_[i + 1], m0, m1) -
                  hermite_antiderivative(t0, y_[i], y_[i + 1], m0, m1));
  }
  return total;
}

double bd_rate(std::span<const RatePsnr> a, std::span<const RatePsnr> b) {
  auto check = [](std::span<const RatePsnr> c, const char* name) {
    if (c.size() < 4) throw std::invalid_argument(std::string("bd_rate: curve ") + name +
                                                  " needs at least 4 points");
    for (size_t i = 0; i < c.size(); ++i) {
      if (!(c[i].rate > 0.0))
        throw std::invalid_argument(std::string("bd_rate: nonpositive rate in curve ") + name);
      if (i > 0 && (!(c[i].rate > c[i - 1].rate) || !(c[i].psnr > c[i - 1].psnr)))
        throw std::invalid_argument(std::string("bd_rate: curve ") + name +
                                    " must have strictly increasing rate and PSNR");
    }
  };
  check(a, "A");
  check(b, "B");

  auto log_curve = [](std::span<const RatePsnr> c) {
    std::vector<double> xs(c.size(), 0.0), ys(c.size(), 0.0);
    for (size_t i = 0; i < c.size(); ++i) {
      xs[i] = c[i].psnr;
      ys[i] = std::log10(c[i].rate);
    }
    return MonotoneCubic(xs, ys);
  };
  MonotoneCubic fa = log_curve(a);
  MonotoneCubic fb = log_curve(b);

  double lo = std::max(fa.x_front(), fb.x_front());
  double hi = std::min(fa.x_back(), fb.x_back());
  if (!(hi > lo)) throw std::invalid_argument("bd_rate: PSNR ranges do not overlap");

  double avg = (fa.integrate(lo, hi) - fb.integrate(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

}  // namespace slpcc

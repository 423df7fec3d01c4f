#include "slpcc/codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

#include "slpcc/metrics.hpp"
#include "slpcc/pmf.hpp"
#include "slpcc/predictors.hpp"
#include "slpcc/range_coder.hpp"

namespace slpcc {
namespace {

constexpr char kMagic[4] = {'L', 'P', 'C', '1'};
constexpr uint8_t kVersion = 1;
constexpr size_t kMaxPoints = size_t(1) << 27;  // container sanity bound
constexpr size_t kTemporalPerTree = 16;         // matches the radius predictor

// ---------------------------------------------------------------------------
// Little-endian container primitives.

class ByteWriter {
 public:
  void u8(uint8_t v) { b_.push_back(v); }
  void u16(uint16_t v) {
    b_.push_back(uint8_t(v));
    b_.push_back(uint8_t(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) b_.push_back(uint8_t(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(uint32_t(v)); }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void raw(std::span<const uint8_t> s) { b_.insert(b_.end(), s.begin(), s.end()); }

  size_t size() const { return b_.size(); }
  std::vector<uint8_t> take() { return std::move(b_); }
  std::span<const uint8_t> view() const { return b_; }

 private:
  std::vector<uint8_t> b_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> d) : d_(d) {}

  uint8_t u8() {
    need(1);
    return d_[pos_++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(d_[pos_]) | uint16_t(d_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(d_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  int32_t i32() { return int32_t(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const uint8_t> raw(size_t n) {
    need(n);
    auto s = d_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  size_t remaining() const { return d_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (d_.size() - pos_ < n) throw DecodeError("codec: truncated stream");
  }

  std::span<const uint8_t> d_;
  size_t pos_ = 0;
};

uint32_t container_crc(std::span<const uint8_t> b) {
  uLong c = crc32(0L, Z_NULL, 0);
  size_t pos = 0;
  while (pos < b.size()) {
    uInt chunk = uInt(std::min<size_t>(b.size() - pos, 1u << 30));
    c = crc32(c, b.data() + pos, chunk);
    pos += chunk;
  }
  return uint32_t(c);
}

// ---------------------------------------------------------------------------
// Deterministic task runner: tasks are indexed, every task writes only its own
// slot, so results are identical for any worker count.

void run_tasks(int workers, size_t count, const std::function<void(size_t)>& fn) {
  if (count == 0) return;
  size_t w = std::min(size_t(std::max(workers, 1)), count);
  if (w <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto body = [&] {
    for (;;) {
      size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(w - 1);
  for (size_t t = 1; t < w; ++t) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Entropy-coding side: one context-conditioned model per axis. A network whose
// first-layer weight matrix is all zero cannot see its input, so its output —
// and therefore the whole axis pmf (for the fixed-support azimuth axis) or the
// pmf shape around the predicted center — is a per-frame constant that both
// sides compute once.

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

ResidualParams sanitize(ResidualParams p) {
  if (!std::isfinite(p.mu)) p.mu = 0.0;
  if (!std::isfinite(p.sigma) || p.sigma <= 0.0) p.sigma = 1024.0;
  if (!std::isfinite(p.alpha)) p.alpha = 0.0;
  return p;
}

struct AxisCtx {
  const EntropyNet* net = nullptr;
  bool constant = false;  // network output independent of the context
  double scale = 1.0;     // context normalization, float32 exact
  bool az_mode = false;   // frame-wide support instead of a centered window
  int32_t lo = 0, hi = 0;
  std::optional<Pmf> const_pmf;
};

Pmf build_pmf(const AxisCtx& a, const ResidualParams& raw) {
  ResidualParams p = sanitize(raw);
  if (a.az_mode) return Pmf::skew_normal({p.mu, p.sigma, p.alpha}, a.lo, a.hi);
  // Centered window of the widest representable width, kept inside the
  // 16-bit residual range; anything outside rides the escape path.
  double c = std::clamp(p.mu, -30720.0, 30720.0);
  int32_t center = int32_t(round_even(c));
  return Pmf::normal({p.mu, p.sigma}, center - Pmf::kMaxWidth / 2,
                     center + Pmf::kMaxWidth / 2 - 1);
}

AxisCtx make_axis(const EntropyNet& net, float scale, bool az_mode, int32_t lo, int32_t hi) {
  AxisCtx a;
  a.net = &net;
  a.scale = double(scale);
  a.az_mode = az_mode;
  a.lo = lo;
  a.hi = hi;
  a.constant = all_zero(net.fc0.weight.w);
  if (a.constant) {
    std::array<double, EntropyNet::kContext> zeros{};
    a.const_pmf = build_pmf(a, net.forward(zeros.data()));
  }
  return a;
}

// Context window (oldest first) plus a one-entry pmf memo: repeated windows —
// common on structured scans — skip the network and pmf rebuild entirely.
class ContextCoder {
 public:
  explicit ContextCoder(const AxisCtx& a) : a_(a) { win_.fill(0); }

  const Pmf& pmf() {
    if (a_.constant) return *a_.const_pmf;
    if (memo_valid_ && memo_key_ == win_) return memo_;
    std::array<double, EntropyNet::kContext> ctx;
    for (int i = 0; i < EntropyNet::kContext; ++i) ctx[i] = double(win_[i]) / a_.scale;
    memo_ = build_pmf(a_, a_.net->forward(ctx.data()));
    memo_key_ = win_;
    memo_valid_ = true;
    return memo_;
  }

  void push(int32_t v) {
    std::copy(win_.begin() + 1, win_.end(), win_.begin());
    win_.back() = v;
  }

  const std::array<int32_t, EntropyNet::kContext>& window() const { return win_; }

 private:
  const AxisCtx& a_;
  std::array<int32_t, EntropyNet::kContext> win_;
  std::array<int32_t, EntropyNet::kContext> memo_key_;
  bool memo_valid_ = false;
  Pmf memo_;
};

struct GroupRef {
  size_t tree = 0;
  size_t begin = 0, end = 0;  // symbol range within the tree (root excluded)
};

std::vector<GroupRef> make_groups(std::span<const size_t> symbols_per_tree, size_t group_size) {
  std::vector<GroupRef> out;
  for (size_t t = 0; t < symbols_per_tree.size(); ++t)
    for (size_t b = 0; b < symbols_per_tree[t]; b += group_size)
      out.push_back({t, b, std::min(b + group_size, symbols_per_tree[t])});
  return out;
}

std::vector<uint8_t> encode_group(const AxisCtx& a, std::span<const int32_t> symbols,
                                  double* nll_bits, TrainingCapture::EntropySamples* cap,
                                  size_t stride, size_t* seen) {
  RangeEncoder enc;
  ContextCoder cc(a);
  double nll = 0.0;
  for (int32_t v : symbols) {
    const Pmf& pmf = cc.pmf();
    nll += pmf.bits(v);
    if (cap && (*seen)++ % stride == 0) {
      cap->contexts.insert(cap->contexts.end(), cc.window().begin(), cc.window().end());
      cap->symbols.push_back(v);
      cap->scales.push_back(a.scale);
    }
    enc.encode_symbol(pmf, v);
    cc.push(v);
  }
  *nll_bits = nll;
  return enc.finish();
}

void decode_group(const AxisCtx& a, std::span<const uint8_t> segment, std::span<int32_t> out) {
  RangeDecoder dec(segment);
  ContextCoder cc(a);
  for (auto& v : out) {
    v = dec.decode_symbol(cc.pmf());
    cc.push(v);
  }
}

// ---------------------------------------------------------------------------
// Prediction side, shared verbatim by encode and decode.

struct PredictorPlan {
  const ModelSet* models = nullptr;
  bool laep_const = false;  // elevation corrector ignores its input
  double laep_corr = 0.0;
  bool rp_const = false;  // radius corrector ignores its input
  double rp_corr = 0.0;
};

PredictorPlan make_plan(const ModelSet& models) {
  PredictorPlan p;
  p.models = &models;
  p.laep_const = all_zero(models.elevation_predictor.l0.w.w);
  if (p.laep_const) {
    std::array<double, LaepModel::kSeq * LaepModel::kFeat> zeros{};
    p.laep_corr = models.elevation_predictor.forward(zeros.data());
  }
  const InterRpModel& rp = models.radius_predictor;
  p.rp_const = all_zero(rp.spatial.w.w) && all_zero(rp.temporal.w.w) && all_zero(rp.residual.w.w);
  if (p.rp_const) {
    std::array<double, InterRpModel::kSeq * 4> zs{};
    std::array<double, InterRpModel::kSeq * 4> zt{};
    std::array<double, InterRpModel::kSeq> zr{};
    p.rp_corr = rp.forward(zs.data(), zt.data(), zr.data());
  }
  return p;
}

struct CaptureCtx {
  TrainingCapture* sink = nullptr;
  size_t laep_seen = 0, rp_seen = 0;
  double true_r = 0.0, true_theta = 0.0;  // encoder-side originals (targets)
};

double predict_radius(const TreeState& st, double phi_bar, const Frame* inter_ref,
                      const PredictorPlan& plan, CaptureCtx* cap) {
  if (!inter_ref) return dc_predict_radius(st);
  const InterRpModel& m = plan.models->radius_predictor;
  if (cap && cap->sink) {
    std::array<double, InterRpModel::kSeq * 4> s, t;
    std::array<double, InterRpModel::kSeq> r;
    if (build_radius_features(st, phi_bar, inter_ref, m.scales, kTemporalPerTree, s.data(),
                              t.data(), r.data())) {
      size_t stride = std::max<size_t>(1, cap->sink->stride);
      if (cap->rp_seen++ % stride == 0) {
        auto& sk = *cap->sink;
        sk.radius_spatial.insert(sk.radius_spatial.end(), s.begin(), s.end());
        sk.radius_temporal.insert(sk.radius_temporal.end(), t.begin(), t.end());
        sk.radius_residuals.insert(sk.radius_residuals.end(), r.begin(), r.end());
        sk.radius_targets.push_back(cap->true_r - dc_predict_radius(st));
      }
    }
  }
  if (plan.rp_const) {
    double dc = dc_predict_radius(st);
    if (plan.rp_corr == 0.0) return dc;
    std::array<double, InterRpModel::kSeq * 4> s, t;
    std::array<double, InterRpModel::kSeq> r;
    bool usable = build_radius_features(st, phi_bar, inter_ref, m.scales, kTemporalPerTree,
                                        s.data(), t.data(), r.data());
    return usable ? dc + plan.rp_corr : dc;
  }
  return inter_rp_predict(m, st, phi_bar, inter_ref);
}

double predict_elevation(const TreeState& st, double r_bar, double phi_bar,
                         const PredictorPlan& plan, CaptureCtx* cap) {
  const LaepModel& m = plan.models->elevation_predictor;
  if (cap && cap->sink) {
    std::array<double, LaepModel::kSeq * LaepModel::kFeat> seq;
    build_elevation_features(st, r_bar, phi_bar, m.scales, seq.data());
    size_t stride = std::max<size_t>(1, cap->sink->stride);
    if (cap->laep_seen++ % stride == 0) {
      auto& sk = *cap->sink;
      sk.elevation_features.insert(sk.elevation_features.end(), seq.begin(), seq.end());
      sk.elevation_targets.push_back(cap->true_theta - tree_mean_elevation(st));
    }
  }
  if (plan.laep_const) return tree_mean_elevation(st) + plan.laep_corr;
  return laep_predict(m, st, r_bar, phi_bar);
}

// The closed prediction loop over one tree: identical arithmetic on both
// sides. Encoding (original != nullptr) fills rad/ele with fresh residual
// codes; decoding consumes them.
PredictiveTree closed_loop(int laser, size_t n, int32_t root_slope, int32_t root_r,
                           int32_t root_theta, std::span<const int32_t> az,
                           std::vector<int32_t>& rad, std::vector<int32_t>& ele,
                           const SphericalPoint* original, double unit, const QuantTuple& qs,
                           double nominal_elevation, const Frame* inter_ref,
                           const PredictorPlan& plan, CaptureCtx* cap) {
  const double q_r = double(qs.q_r);
  const double q_theta = double(qs.q_theta);
  const bool encoding = original != nullptr;

  PredictiveTree out;
  out.laser = laser;
  out.points.resize(n);

  TreeState st;
  st.laser = laser;
  st.nominal_elevation = nominal_elevation;

  double phi0 = azimuth_reconstruct(root_slope, unit);
  double r0 = dequantize_residual(root_r, q_r);
  double theta0 = dequantize_residual(root_theta, q_theta);
  st.push(r0, theta0, phi0, 0.0);
  out.points[0].r = r0;
  out.points[0].theta = theta0;
  out.points[0].phi = phi0;
  out.points[0].laser = laser;

  int64_t slope = root_slope;
  for (size_t i = 1; i < n; ++i) {
    slope += az[i - 1];
    double phi = unit * double(slope);
    if (cap) {
      cap->true_r = original[i].r;
      cap->true_theta = original[i].theta;
    }

    double r_hat = predict_radius(st, phi, inter_ref, plan, cap);
    int32_t rc = encoding ? quantize_residual(original[i].r - r_hat, q_r) : rad[i - 1];
    if (encoding) rad[i - 1] = rc;
    double r_res = dequantize_residual(rc, q_r);
    double r_bar = r_hat + r_res;

    double theta_hat = predict_elevation(st, r_bar, phi, plan, cap);
    int32_t ec = encoding ? quantize_residual(original[i].theta - theta_hat, q_theta) : ele[i - 1];
    if (encoding) ele[i - 1] = ec;
    double theta_bar = theta_hat + dequantize_residual(ec, q_theta);

    st.push(r_bar, theta_bar, phi, r_res);
    out.points[i].r = r_bar;
    out.points[i].theta = theta_bar;
    out.points[i].phi = phi;
    out.points[i].laser = laser;
  }
  return out;
}

struct TreeCoding {
  int32_t root_slope = 0, root_r = 0, root_theta = 0;
  std::vector<int32_t> az, rad, ele;
  PredictiveTree recon;
};

TreeCoding encode_tree(const PredictiveTree& tree, double unit, const QuantTuple& qs,
                       double nominal_elevation, const Frame* inter_ref,
                       const PredictorPlan& plan, CaptureCtx* cap) {
  const size_t n = tree.size();
  TreeCoding tc;
  std::vector<double> phis(n, 0.0);
  for (size_t i = 0; i < n; ++i) phis[i] = tree.points[i].phi;
  auto codes = azimuth_encode(phis, unit);
  tc.root_slope = codes[0].slope;
  tc.az.assign(n - 1, 0);
  for (size_t i = 1; i < n; ++i) tc.az[i - 1] = codes[i].delta;
  tc.root_r = quantize_residual(tree.points[0].r, double(qs.q_r));
  tc.root_theta = quantize_residual(tree.points[0].theta, double(qs.q_theta));
  tc.rad.assign(n - 1, 0);
  tc.ele.assign(n - 1, 0);
  tc.recon = closed_loop(tree.laser, n, tc.root_slope, tc.root_r, tc.root_theta, tc.az, tc.rad,
                         tc.ele, tree.points.data(), unit, qs, nominal_elevation, inter_ref,
                         plan, cap);
  return tc;
}

// Builds the radius predictor's reference: the reference reconstruction's
// upper part mapped through the coded transform, re-bucketed into trees.
// Points the transform lands exactly on the origin are dropped — both sides
// apply the same rule, so the frames stay identical.
Frame registered_reference(const Frame& reference, int32_t reference_split,
                           const RigidTransform& t, const SensorProfile& profile) {
  FrameSplit split = split_frame(reference, reference_split);
  std::vector<Vec3> upper = split.upper.to_cartesian();
  std::vector<Vec3> moved = apply_transform(t, upper);
  std::vector<Vec3> kept;
  kept.reserve(moved.size());
  for (const Vec3& p : moved)
    if (p.norm() > 0.0) kept.push_back(p);
  return build_frame(kept, profile);
}

float axis_scale(size_t count, double sum_sq) {
  if (count == 0) return 1.0f;
  double rms = std::sqrt(sum_sq / double(count));
  return float(std::max(1.0, rms));
}

int resolve_workers(const CodecConfig& cfg, bool capturing) {
  if (capturing) return 1;  // capture buffers grow in coding order
  if (cfg.workers > 0) return cfg.workers;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

}  // namespace

EncodedFrame encode_frame(const Frame& frame, const ReconstructedFrame* reference,
                          const CodecConfig& cfg, const ModelSet& models,
                          const SensorProfile& profile, TrainingCapture* capture) {
  validate(cfg.qs);
  if (cfg.group_size < 1) throw std::invalid_argument("codec: group size must be positive");
  if (cfg.max_parallel_groups < 1)
    throw std::invalid_argument("codec: parallel group cap must be positive");
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("codec: tau must be positive");
  const int lasers = profile.laser_count();
  if (lasers > 65535) throw std::invalid_argument("codec: too many lasers for the container");

  const size_t n_points = frame.point_count();
  if (n_points == 0) throw std::invalid_argument("codec: empty frame");
  if (n_points > kMaxPoints)
    throw std::invalid_argument("codec: point count exceeds the container limit");
  int prev_laser = -1;
  for (const auto& t : frame.trees) {
    if (t.points.empty()) throw std::invalid_argument("codec: empty tree");
    if (t.laser <= prev_laser || t.laser >= lasers)
      throw std::invalid_argument("codec: tree laser ids must be increasing and in range");
    prev_laser = t.laser;
  }

  // --- Mode decision: partition, intra/predicted choice, registration.
  std::vector<double> variances = radius_variances(frame, lasers);
  const int32_t split = partition_split(variances, cfg.tau);

  FrameKind kind = FrameKind::kIntra;
  double upper_psnr = 0.0;
  std::array<uint8_t, kTransformBytes> tbytes{};
  Frame registered;
  if (reference) {
    FrameSplit current = split_frame(frame, split);
    FrameSplit ref = split_frame(reference->frame, reference->split);
    std::vector<Vec3> current_upper = current.upper.to_cartesian();
    std::vector<Vec3> ref_upper = ref.upper.to_cartesian();
    FrameDecision decision =
        frame_decision(current_upper, ref_upper, cfg.i_frame_psnr_threshold, cfg.psnr_peak);
    kind = decision.kind;
    upper_psnr = decision.psnr;
    if (kind == FrameKind::kPredicted) {
      IcpResult icp = icp_register(ref_upper, current_upper);
      tbytes = serialize_transform(icp.transform);
      registered =
          registered_reference(reference->frame, reference->split, parse_transform(tbytes),
                               profile);
    }
  }

  // --- Phase 1: closed-loop prediction per tree (parallel across trees).
  const double unit = phi_unit(profile.azimuth_resolution(), cfg.qs.q_phi);
  const PredictorPlan plan = make_plan(models);
  const int workers = resolve_workers(cfg, capture != nullptr);
  const size_t n_trees = frame.trees.size();

  std::vector<TreeCoding> coded(n_trees);
  CaptureCtx cap_ctx;
  cap_ctx.sink = capture;
  run_tasks(workers, n_trees, [&](size_t i) {
    const PredictiveTree& tree = frame.trees[i];
    const Frame* inter_ref =
        (kind == FrameKind::kPredicted && tree.laser > split) ? &registered : nullptr;
    coded[i] = encode_tree(tree, unit, cfg.qs, profile.elevation(tree.laser), inter_ref, plan,
                           capture ? &cap_ctx : nullptr);
  });

  // --- Frame-level entropy parameters.
  double sq_az = 0.0, sq_rad = 0.0, sq_ele = 0.0;
  size_t n_symbols = 0;
  int64_t az_min = std::numeric_limits<int64_t>::max();
  int64_t az_max = std::numeric_limits<int64_t>::min();
  for (const auto& tc : coded) {
    n_symbols += tc.az.size();
    for (int32_t v : tc.az) {
      sq_az += double(v) * double(v);
      az_min = std::min<int64_t>(az_min, v);
      az_max = std::max<int64_t>(az_max, v);
    }
    for (int32_t v : tc.rad) sq_rad += double(v) * double(v);
    for (int32_t v : tc.ele) sq_ele += double(v) * double(v);
  }
  const float scale_az = axis_scale(n_symbols, sq_az);
  const float scale_rad = axis_scale(n_symbols, sq_rad);
  const float scale_ele = axis_scale(n_symbols, sq_ele);

  int32_t az_lo = 0, az_hi = 0;
  if (n_symbols > 0) {
    const int64_t bound_lo = -16 * int64_t(cfg.qs.q_phi);
    const int64_t bound_hi = 4096 * int64_t(cfg.qs.q_phi);
    int64_t lo = std::clamp(az_min, bound_lo, bound_hi);
    int64_t hi = std::clamp(az_max, lo, bound_hi);
    hi = std::min(hi, lo + Pmf::kMaxWidth - 1);
    az_lo = int32_t(lo);
    az_hi = int32_t(hi);
  }

  const AxisCtx ax_az = make_axis(models.azimuth, scale_az, true, az_lo, az_hi);
  const AxisCtx ax_rad = make_axis(models.radius, scale_rad, false, 0, 0);
  const AxisCtx ax_ele = make_axis(models.elevation, scale_ele, false, 0, 0);

  // --- Phase 2: group entropy coding (parallel across axis/group tasks).
  std::vector<size_t> per_tree(n_trees, 0);
  for (size_t i = 0; i < n_trees; ++i) per_tree[i] = coded[i].az.size();
  const std::vector<GroupRef> groups = make_groups(per_tree, size_t(cfg.group_size));
  const size_t n_groups = groups.size();

  std::vector<std::vector<uint8_t>> segments(3 * n_groups);
  std::vector<double> seg_nll(3 * n_groups, 0.0);
  std::array<size_t, 3> ent_seen = {0, 0, 0};
  const int group_workers = std::min(workers, cfg.max_parallel_groups);
  run_tasks(group_workers, 3 * n_groups, [&](size_t task) {
    const size_t axis = task / n_groups;
    const GroupRef& g = groups[task % n_groups];
    const TreeCoding& tc = coded[g.tree];
    const std::vector<int32_t>& syms = axis == 0 ? tc.az : axis == 1 ? tc.rad : tc.ele;
    const AxisCtx& ax = axis == 0 ? ax_az : axis == 1 ? ax_rad : ax_ele;
    TrainingCapture::EntropySamples* sink = nullptr;
    if (capture)
      sink = axis == 0 ? &capture->azimuth : axis == 1 ? &capture->radius : &capture->elevation;
    size_t stride = capture ? std::max<size_t>(1, capture->stride) : 1;
    segments[task] =
        encode_group(ax, std::span(syms).subspan(g.begin, g.end - g.begin), &seg_nll[task],
                     sink, stride, &ent_seen[axis]);
  });

  // --- Container assembly.
  ByteWriter w;
  w.raw(std::span(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.u8(kVersion);
  w.u8(uint8_t(kind));
  w.u16(uint16_t(lasers));
  w.u32(uint32_t(n_points));
  w.u32(uint32_t(cfg.group_size));
  w.i32(cfg.qs.q_phi);
  w.i32(cfg.qs.q_theta);
  w.i32(cfg.qs.q_r);
  w.i32(split);
  w.u32(models.weight_checksum());
  w.f32(scale_az);
  w.f32(scale_rad);
  w.f32(scale_ele);
  w.i32(az_lo);
  w.i32(az_hi);
  if (kind == FrameKind::kPredicted) w.raw(tbytes);
  w.u32(uint32_t(n_trees));
  for (size_t i = 0; i < n_trees; ++i) {
    w.u16(uint16_t(frame.trees[i].laser));
    w.u32(uint32_t(frame.trees[i].size()));
    w.i32(coded[i].root_slope);
    w.i32(coded[i].root_r);
    w.i32(coded[i].root_theta);
  }
  w.u32(uint32_t(n_groups));
  for (size_t axis = 0; axis < 3; ++axis)
    for (size_t g = 0; g < n_groups; ++g) w.u32(uint32_t(segments[axis * n_groups + g].size()));

  const size_t header_bytes = w.size() + 4;  // trailing checksum counts as header
  FrameStats stats;
  stats.kind = kind;
  stats.upper_psnr = upper_psnr;
  stats.points = n_points;
  stats.groups = n_groups;
  for (size_t axis = 0; axis < 3; ++axis) {
    size_t bytes = 0;
    double nll = 0.0;
    for (size_t g = 0; g < n_groups; ++g) {
      bytes += segments[axis * n_groups + g].size();
      nll += seg_nll[axis * n_groups + g];
    }
    if (axis == 0) {
      stats.azimuth_bytes = bytes;
      stats.azimuth_nll = nll;
    } else if (axis == 1) {
      stats.radius_bytes = bytes;
      stats.radius_nll = nll;
    } else {
      stats.elevation_bytes = bytes;
      stats.elevation_nll = nll;
    }
  }
  for (const auto& s : segments) w.raw(s);
  w.u32(container_crc(w.view()));

  EncodedFrame out;
  out.bytes = w.take();
  stats.header_bytes = header_bytes;
  stats.total_bytes = out.bytes.size();
  out.stats = stats;
  out.reconstruction.split = split;
  out.reconstruction.frame.trees.resize(n_trees);
  for (size_t i = 0; i < n_trees; ++i)
    out.reconstruction.frame.trees[i] = std::move(coded[i].recon);
  return out;
}

ReconstructedFrame decode_frame(std::span<const uint8_t> bytes,
                                const ReconstructedFrame* reference, const CodecConfig& cfg,
                                const ModelSet& models, const SensorProfile& profile) {
  if (bytes.size() < 8) throw DecodeError("codec: truncated stream");
  const size_t body = bytes.size() - 4;
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= uint32_t(bytes[body + i]) << (8 * i);
  if (stored != container_crc(bytes.first(body)))
    throw DecodeError("codec: container checksum mismatch");

  ByteReader r(bytes.first(body));
  auto magic = r.raw(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw DecodeError("codec: bad magic");
  if (r.u8() != kVersion) throw DecodeError("codec: unsupported version");
  const uint8_t kind_byte = r.u8();
  if (kind_byte > 1) throw DecodeError("codec: bad frame kind");
  const FrameKind kind = FrameKind(kind_byte);
  const int lasers = profile.laser_count();
  if (r.u16() != uint16_t(lasers)) throw DecodeError("codec: sensor profile mismatch");
  const uint32_t n_points = r.u32();
  if (n_points == 0 || size_t(n_points) > kMaxPoints) throw DecodeError("codec: bad point count");
  const uint32_t group_size = r.u32();
  if (group_size == 0) throw DecodeError("codec: bad group size");
  QuantTuple qs;
  qs.q_phi = r.i32();
  qs.q_theta = r.i32();
  qs.q_r = r.i32();
  try {
    validate(qs);
  } catch (const std::invalid_argument&) {
    throw DecodeError("codec: bad quantization tuple");
  }
  const int32_t split = r.i32();
  if (split < -1 || split >= lasers) throw DecodeError("codec: bad split index");
  if (r.u32() != models.weight_checksum()) throw DecodeError("codec: model checksum mismatch");
  const float scale_az = r.f32();
  const float scale_rad = r.f32();
  const float scale_ele = r.f32();
  for (float s : {scale_az, scale_rad, scale_ele})
    if (!std::isfinite(s) || s < 1.0f) throw DecodeError("codec: bad normalization scale");
  const int32_t az_lo = r.i32();
  const int32_t az_hi = r.i32();
  if (az_lo > az_hi || int64_t(az_hi) - int64_t(az_lo) + 1 > Pmf::kMaxWidth)
    throw DecodeError("codec: bad azimuth support");

  RigidTransform transform = RigidTransform::identity();
  if (kind == FrameKind::kPredicted) {
    if (!reference) throw DecodeError("codec: predicted frame without a reference");
    transform = parse_transform(r.raw(kTransformBytes));
  }

  const uint32_t n_trees = r.u32();
  if (n_trees == 0 || n_trees > uint32_t(lasers)) throw DecodeError("codec: bad tree count");
  struct TreeInfo {
    int laser;
    uint32_t count;
    int32_t root_slope, root_r, root_theta;
  };
  std::vector<TreeInfo> info(n_trees);
  int prev_laser = -1;
  uint64_t total_points = 0;
  for (auto& t : info) {
    t.laser = r.u16();
    t.count = r.u32();
    t.root_slope = r.i32();
    t.root_r = r.i32();
    t.root_theta = r.i32();
    if (t.laser <= prev_laser || t.laser >= lasers) throw DecodeError("codec: bad tree laser");
    if (t.count == 0) throw DecodeError("codec: empty tree");
    prev_laser = t.laser;
    total_points += t.count;
  }
  if (total_points != n_points) throw DecodeError("codec: point count mismatch");

  std::vector<size_t> per_tree(n_trees, 0);
  for (size_t i = 0; i < n_trees; ++i) per_tree[i] = info[i].count - 1;
  const std::vector<GroupRef> groups = make_groups(per_tree, group_size);
  if (r.u32() != uint32_t(groups.size())) throw DecodeError("codec: group table mismatch");
  std::vector<uint32_t> seg_len(3 * groups.size(), 0);
  uint64_t payload = 0;
  for (auto& len : seg_len) {
    len = r.u32();
    payload += len;
  }
  if (payload != r.remaining()) throw DecodeError("codec: payload size mismatch");
  std::vector<std::span<const uint8_t>> segments(seg_len.size());
  for (size_t i = 0; i < seg_len.size(); ++i) segments[i] = r.raw(seg_len[i]);

  // --- Entropy decode (parallel across axis/group tasks).
  const AxisCtx ax_az = make_axis(models.azimuth, scale_az, true, az_lo, az_hi);
  const AxisCtx ax_rad = make_axis(models.radius, scale_rad, false, 0, 0);
  const AxisCtx ax_ele = make_axis(models.elevation, scale_ele, false, 0, 0);

  std::vector<std::vector<int32_t>> az(n_trees), rad(n_trees), ele(n_trees);
  for (size_t i = 0; i < n_trees; ++i) {
    az[i].assign(per_tree[i], 0);
    rad[i].assign(per_tree[i], 0);
    ele[i].assign(per_tree[i], 0);
  }
  const int workers = resolve_workers(cfg, false);
  const int group_workers = std::min(workers, cfg.max_parallel_groups);
  run_tasks(group_workers, segments.size(), [&](size_t task) {
    const size_t axis = task / groups.size();
    const GroupRef& g = groups[task % groups.size()];
    auto& dst = axis == 0 ? az[g.tree] : axis == 1 ? rad[g.tree] : ele[g.tree];
    const AxisCtx& ax = axis == 0 ? ax_az : axis == 1 ? ax_rad : ax_ele;
    decode_group(ax, segments[task], std::span(dst).subspan(g.begin, g.end - g.begin));
  });

  // --- Closed-loop reconstruction per tree (parallel across trees).
  Frame registered;
  if (kind == FrameKind::kPredicted)
    registered = registered_reference(reference->frame, reference->split, transform, profile);

  const double unit = phi_unit(profile.azimuth_resolution(), qs.q_phi);
  const PredictorPlan plan = make_plan(models);
  ReconstructedFrame out;
  out.split = split;
  out.frame.trees.resize(n_trees);
  run_tasks(workers, n_trees, [&](size_t i) {
    const Frame* inter_ref =
        (kind == FrameKind::kPredicted && info[i].laser > split) ? &registered : nullptr;
    out.frame.trees[i] = closed_loop(info[i].laser, info[i].count, info[i].root_slope,
                                     info[i].root_r, info[i].root_theta, az[i], rad[i], ele[i],
                                     nullptr, unit, qs, profile.elevation(info[i].laser),
                                     inter_ref, plan, nullptr);
  });
  return out;
}

SequenceResult encode_sequence(std::span<const Frame> frames, const CodecConfig& cfg,
                               const ModelSet& models, const SensorProfile& profile,
                               bool with_metrics) {
  SequenceResult out;
  out.bitstreams.reserve(frames.size());
  out.stats.reserve(frames.size());
  ReconstructedFrame previous;
  bool have_previous = false;
  for (const Frame& frame : frames) {
    EncodedFrame ef =
        encode_frame(frame, have_previous ? &previous : nullptr, cfg, models, profile);
    if (with_metrics) {
      std::vector<Vec3> original = frame.to_cartesian();
      std::vector<Vec3> reconstructed = ef.reconstruction.frame.to_cartesian();
      ef.stats.d1 = d1_psnr(original, reconstructed, cfg.psnr_peak);
      ef.stats.d2 = d2_psnr(original, reconstructed, cfg.psnr_peak);
      ef.stats.cd = chamfer(original, reconstructed);
    }
    out.bitstreams.push_back(std::move(ef.bytes));
    out.stats.push_back(ef.stats);
    previous = std::move(ef.reconstruction);
    have_previous = true;
  }
  return out;
}

}  // namespace slpcc

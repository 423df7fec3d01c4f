#include "slpcc/models.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace slpcc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// EntropyNet

void EntropyNet::init_default(bool skewed_head) {
  skewed = skewed_head;
  Rng rng(0);
  fc0.init(kContext, kWidth, rng);
  fc1.init(kWidth, kWidth, rng);
  fc2.init(kWidth, kWidth, rng);
  head.init(kWidth, head_width(), rng);
  for (nn::Param* p : params()) std::fill(p->w.begin(), p->w.end(), 0.0);
  head.bias.w[1] = 2.0;  // scale head: softplus(2) ~ 2.13, a workable default
}

void EntropyNet::init_random(bool skewed_head, uint64_t seed) {
  skewed = skewed_head;
  Rng rng(seed);
  fc0.init(kContext, kWidth, rng);
  fc1.init(kWidth, kWidth, rng);
  fc2.init(kWidth, kWidth, rng);
  head.init(kWidth, head_width(), rng);
  head.bias.w[1] = 2.0;
}

ResidualParams EntropyNet::forward(const double* ctx, Trace* trace) const {
  nn::Vec local_r0, local_r1, local_r2, local_y1, local_y2, local_h;
  nn::Vec& r0 = trace ? trace->r0 : local_r0;
  nn::Vec& r1 = trace ? trace->r1 : local_r1;
  nn::Vec& r2 = trace ? trace->r2 : local_r2;
  nn::Vec& y1 = trace ? trace->y1 : local_y1;
  nn::Vec& y2 = trace ? trace->y2 : local_y2;
  nn::Vec& h = trace ? trace->h : local_h;
  r0.assign(size_t(kWidth), 0.0);
  r1.assign(size_t(kWidth), 0.0);
  r2.assign(size_t(kWidth), 0.0);
  y1.assign(size_t(kWidth), 0.0);
  y2.assign(size_t(kWidth), 0.0);
  h.assign(size_t(head_width()), 0.0);
  if (trace) trace->x.assign(ctx, ctx + kContext);

  fc0.forward(ctx, r0.data());
  for (double& v : r0) v = nn::relu(v);
  fc1.forward(r0.data(), r1.data());
  for (int i = 0; i < kWidth; ++i) y1[size_t(i)] = nn::relu(r1[size_t(i)]) + r0[size_t(i)];
  fc2.forward(y1.data(), r2.data());
  for (int i = 0; i < kWidth; ++i) y2[size_t(i)] = nn::relu(r2[size_t(i)]) + y1[size_t(i)];
  head.forward(y2.data(), h.data());

  ResidualParams out;
  out.mu = h[0];
  out.sigma = nn::softplus(h[1]) + kSigmaFloor;
  out.alpha = skewed ? h[2] : 0.0;
  return out;
}

void EntropyNet::backward(const Trace& trace, double d_mu, double d_sigma, double d_alpha) {
  nn::Vec dh(size_t(head_width()), 0.0);
  dh[0] = d_mu;
  dh[1] = d_sigma * nn::sigmoid(trace.h[1]);  // softplus' = sigmoid
  if (skewed) dh[2] = d_alpha;

  nn::Vec dy2(size_t(kWidth), 0.0);
  head.backward(trace.y2.data(), dh.data(), dy2.data());

  nn::Vec dr2(size_t(kWidth), 0.0);
  for (int i = 0; i < kWidth; ++i)
    dr2[size_t(i)] = trace.r2[size_t(i)] > 0.0 ? dy2[size_t(i)] : 0.0;
  nn::Vec dy1 = dy2;  // skip path
  fc2.backward(trace.y1.data(), dr2.data(), dy1.data());

  nn::Vec dr1(size_t(kWidth), 0.0);
  for (int i = 0; i < kWidth; ++i)
    dr1[size_t(i)] = trace.r1[size_t(i)] > 0.0 ? dy1[size_t(i)] : 0.0;
  nn::Vec dr0_total = dy1;  // skip path
  fc1.backward(trace.r0.data(), dr1.data(), dr0_total.data());

  nn::Vec dpre0(size_t(kWidth), 0.0);
  for (int i = 0; i < kWidth; ++i)
    dpre0[size_t(i)] = trace.r0[size_t(i)] > 0.0 ? dr0_total[size_t(i)] : 0.0;
  fc0.backward(trace.x.data(), dpre0.data(), nullptr);
}

std::vector<nn::Param*> EntropyNet::params() {
  std::vector<nn::Param*> list;
  fc0.params(list);
  fc1.params(list);
  fc2.params(list);
  head.params(list);
  return list;
}

std::vector<const nn::Param*> EntropyNet::params() const {
  return nn::as_const(const_cast<EntropyNet*>(this)->params());
}

// ---------------------------------------------------------------------------
// LaepModel

void LaepModel::init_default() {
  init_random(0);
  for (nn::Param* p : params()) std::fill(p->w.begin(), p->w.end(), 0.0);
}

void LaepModel::init_random(uint64_t seed) {
  Rng rng(seed);
  l0.init(kFeat, kHidden, rng);
  l1.init(kHidden, kHidden, rng);
  l2.init(kHidden, kHidden, rng);
  attn.init(kHidden, rng);
  m0.init(kHidden, 64, rng);
  m1.init(64, 32, rng);
  m2.init(32, 1, rng);
}

double LaepModel::forward(const double* seq, Trace* trace) const {
  Trace local;
  Trace& t = trace ? *trace : local;

  l0.forward(seq, kSeq, &t.t0);
  l1.forward(t.t0.h.data(), kSeq, &t.t1);
  l2.forward(t.t1.h.data(), kSeq, &t.t2);

  t.attn_out.assign(size_t(kSeq) * size_t(kHidden), 0.0);
  attn.forward(t.t2.h.data(), kSeq, &t.ta, t.attn_out.data());

  t.pooled.assign(size_t(kHidden), 0.0);
  for (int s = 0; s < kSeq; ++s)
    for (int d = 0; d < kHidden; ++d)
      t.pooled[size_t(d)] += t.attn_out[size_t(s) * size_t(kHidden) + size_t(d)];
  for (double& v : t.pooled) v /= double(kSeq);

  t.a0.assign(64, 0.0);
  m0.forward(t.pooled.data(), t.a0.data());
  for (double& v : t.a0) v = nn::relu(v);
  t.a1.assign(32, 0.0);
  m1.forward(t.a0.data(), t.a1.data());
  for (double& v : t.a1) v = nn::relu(v);
  double out = 0.0;
  m2.forward(t.a1.data(), &out);
  t.out_raw = out;
  return out * kOutputScale;
}

void LaepModel::backward(const Trace& t, double d_correction) {
  double dout = d_correction * kOutputScale;

  nn::Vec da1(32, 0.0);
  m2.backward(t.a1.data(), &dout, da1.data());
  for (size_t i = 0; i < 32; ++i)
    if (t.a1[i] <= 0.0) da1[i] = 0.0;
  nn::Vec da0(64, 0.0);
  m1.backward(t.a0.data(), da1.data(), da0.data());
  for (size_t i = 0; i < 64; ++i)
    if (t.a0[i] <= 0.0) da0[i] = 0.0;
  nn::Vec dpool(size_t(kHidden), 0.0);
  m0.backward(t.pooled.data(), da0.data(), dpool.data());

  nn::Vec dattn(size_t(kSeq) * size_t(kHidden), 0.0);
  for (int s = 0; s < kSeq; ++s)
    for (int d = 0; d < kHidden; ++d)
      dattn[size_t(s) * size_t(kHidden) + size_t(d)] = dpool[size_t(d)] / double(kSeq);

  nn::Vec dh2(size_t(kSeq) * size_t(kHidden), 0.0);
  attn.backward(t.ta, dattn.data(), dh2.data());

  nn::Vec dh1(size_t(kSeq) * size_t(kHidden), 0.0);
  l2.backward(t.t2, dh2.data(), dh1.data());
  nn::Vec dh0(size_t(kSeq) * size_t(kHidden), 0.0);
  l1.backward(t.t1, dh1.data(), dh0.data());
  l0.backward(t.t0, dh0.data(), nullptr);
}

std::vector<nn::Param*> LaepModel::params() {
  std::vector<nn::Param*> list;
  l0.params(list);
  l1.params(list);
  l2.params(list);
  attn.params(list);
  m0.params(list);
  m1.params(list);
  m2.params(list);
  return list;
}

std::vector<const nn::Param*> LaepModel::params() const {
  return nn::as_const(const_cast<LaepModel*>(this)->params());
}

// ---------------------------------------------------------------------------
// InterRpModel

void InterRpModel::init_default() {
  init_random(0);
  for (nn::Param* p : params()) std::fill(p->w.begin(), p->w.end(), 0.0);
}

void InterRpModel::init_random(uint64_t seed) {
  Rng rng(seed);
  spatial.init(4, kHidden, rng);
  temporal.init(4, kHidden, rng);
  residual.init(1, kHidden, rng);
  attn.init(kHidden, rng);
  m0.init(kHidden, 64, rng);
  m1.init(64, 32, rng);
  m2.init(32, 1, rng);
}

double InterRpModel::forward(const double* spatial_seq, const double* temporal_seq,
                             const double* residual_seq, Trace* trace) const {
  Trace local;
  Trace& t = trace ? *trace : local;

  spatial.forward(spatial_seq, kSeq, &t.ts);
  temporal.forward(temporal_seq, kSeq, &t.tt);
  residual.forward(residual_seq, kSeq, &t.tr);

  t.states.assign(3 * size_t(kHidden), 0.0);
  const size_t last = size_t(kSeq - 1) * size_t(kHidden);
  for (int d = 0; d < kHidden; ++d) {
    t.states[size_t(d)] = t.ts.h[last + size_t(d)];
    t.states[size_t(kHidden + d)] = t.tt.h[last + size_t(d)];
    t.states[size_t(2 * kHidden + d)] = t.tr.h[last + size_t(d)];
  }

  t.attn_out.assign(3 * size_t(kHidden), 0.0);
  attn.forward(t.states.data(), 3, &t.ta, t.attn_out.data());

  t.pooled.assign(size_t(kHidden), 0.0);
  for (int s = 0; s < 3; ++s)
    for (int d = 0; d < kHidden; ++d)
      t.pooled[size_t(d)] += t.attn_out[size_t(s) * size_t(kHidden) + size_t(d)];
  for (double& v : t.pooled) v /= 3.0;

  t.a0.assign(64, 0.0);
  m0.forward(t.pooled.data(), t.a0.data());
  for (double& v : t.a0) v = nn::relu(v);
  t.a1.assign(32, 0.0);
  m1.forward(t.a0.data(), t.a1.data());
  for (double& v : t.a1) v = nn::relu(v);
  double out = 0.0;
  m2.forward(t.a1.data(), &out);
  t.out_raw = out;
  return out;
}

void InterRpModel::backward(const Trace& t, double d_correction) {
  double dout = d_correction;

  nn::Vec da1(32, 0.0);
  m2.backward(t.a1.data(), &dout, da1.data());
  for (size_t i = 0; i < 32; ++i)
    if (t.a1[i] <= 0.0) da1[i] = 0.0;
  nn::Vec da0(64, 0.0);
  m1.backward(t.a0.data(), da1.data(), da0.data());
  for (size_t i = 0; i < 64; ++i)
    if (t.a0[i] <= 0.0) da0[i] = 0.0;
  nn::Vec dpool(size_t(kHidden), 0.0);
  m0.backward(t.pooled.data(), da0.data(), dpool.data());

  nn::Vec dattn(3 * size_t(kHidden), 0.0);
  for (int s = 0; s < 3; ++s)
    for (int d = 0; d < kHidden; ++d)
      dattn[size_t(s) * size_t(kHidden) + size_t(d)] = dpool[size_t(d)] / 3.0;

  nn::Vec dstates(3 * size_t(kHidden), 0.0);
  attn.backward(t.ta, dattn.data(), dstates.data());

  nn::Vec dh(size_t(kSeq) * size_t(kHidden), 0.0);
  const size_t last = size_t(kSeq - 1) * size_t(kHidden);
  auto run = [&](nn::Lstm& lstm, const nn::LstmTrace& tr, int slot) {
    std::fill(dh.begin(), dh.end(), 0.0);
    for (int d = 0; d < kHidden; ++d)
      dh[last + size_t(d)] = dstates[size_t(slot * kHidden + d)];
    lstm.backward(tr, dh.data(), nullptr);
  };
  run(spatial, t.ts, 0);
  run(temporal, t.tt, 1);
  run(residual, t.tr, 2);
}

std::vector<nn::Param*> InterRpModel::params() {
  std::vector<nn::Param*> list;
  spatial.params(list);
  temporal.params(list);
  residual.params(list);
  attn.params(list);
  m0.params(list);
  m1.params(list);
  m2.params(list);
  return list;
}

std::vector<const nn::Param*> InterRpModel::params() const {
  return nn::as_const(const_cast<InterRpModel*>(this)->params());
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

constexpr char kMagic[4] = {'S', 'L', 'P', 'W'};

void write_file(const std::string& path, const json& header, const std::vector<float>& flat) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("model file: cannot write " + path);
  std::string h = header.dump();
  uint32_t hlen = uint32_t(h.size());
  f.write(kMagic, 4);
  char lenb[4] = {char(hlen & 0xff), char((hlen >> 8) & 0xff), char((hlen >> 16) & 0xff),
                  char((hlen >> 24) & 0xff)};
  f.write(lenb, 4);
  f.write(h.data(), std::streamsize(h.size()));
  static_assert(sizeof(float) == 4);
  for (float v : flat) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    char b[4] = {char(bits & 0xff), char((bits >> 8) & 0xff), char((bits >> 16) & 0xff),
                 char((bits >> 24) & 0xff)};
    f.write(b, 4);
  }
  if (!f) throw std::runtime_error("model file: write failed for " + path);
}

std::pair<json, std::vector<float>> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("model file: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("model file: bad magic in " + path);
  unsigned char lenb[4];
  f.read(reinterpret_cast<char*>(lenb), 4);
  if (!f) throw std::runtime_error("model file: truncated header in " + path);
  uint32_t hlen = uint32_t(lenb[0]) | uint32_t(lenb[1]) << 8 | uint32_t(lenb[2]) << 16 |
                  uint32_t(lenb[3]) << 24;
  if (hlen > (1u << 20)) throw std::runtime_error("model file: oversized header in " + path);
  std::string h(hlen, '\0');
  f.read(h.data(), std::streamsize(hlen));
  if (!f) throw std::runtime_error("model file: truncated header in " + path);
  json header = json::parse(h, nullptr, false);
  if (header.is_discarded())
    throw std::runtime_error("model file: malformed header in " + path);

  std::vector<float> flat;
  size_t count = header.at("count").get<size_t>();
  flat.resize(count);
  std::vector<unsigned char> raw(count * 4);
  f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!f) throw std::runtime_error("model file: truncated weights in " + path);
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = uint32_t(raw[4 * i]) | uint32_t(raw[4 * i + 1]) << 8 |
                    uint32_t(raw[4 * i + 2]) << 16 | uint32_t(raw[4 * i + 3]) << 24;
    std::memcpy(&flat[i], &bits, 4);
  }
  return {header, flat};
}

json scales_to_json(const FeatureScales& s) {
  return json{{"r", s.r}, {"theta", s.theta}, {"dphi", s.dphi}, {"did", s.did},
              {"residual", s.residual}};
}

FeatureScales scales_from_json(const json& j) {
  FeatureScales s;
  s.r = j.at("r").get<double>();
  s.theta = j.at("theta").get<double>();
  s.dphi = j.at("dphi").get<double>();
  s.did = j.at("did").get<double>();
  s.residual = j.at("residual").get<double>();
  return s;
}

void require_field(const json& h, const std::string& key, const json& want,
                   const std::string& path) {
  if (h.at(key) != want)
    throw std::runtime_error("model file: " + path + ": field '" + key + "' is " +
                             h.at(key).dump() + ", expected " + want.dump());
}

}  // namespace

void save_entropy_net(const EntropyNet& net, const std::string& axis, const std::string& path) {
  auto flat = nn::flatten(net.params());
  json header{{"kind", "entropy"},   {"version", 1},
              {"axis", axis},        {"context", EntropyNet::kContext},
              {"width", EntropyNet::kWidth}, {"head", net.head_width()},
              {"count", flat.size()}};
  write_file(path, header, flat);
}

EntropyNet load_entropy_net(const std::string& axis, const std::string& path) {
  auto [header, flat] = read_file(path);
  require_field(header, "kind", "entropy", path);
  require_field(header, "axis", axis, path);
  require_field(header, "version", 1, path);
  int head = header.at("head").get<int>();
  if (head != 2 && head != 3)
    throw std::runtime_error("model file: bad head width in " + path);
  EntropyNet net;
  net.init_default(head == 3);
  nn::unflatten(net.params(), flat);
  return net;
}

void save_laep(const LaepModel& m, const std::string& path) {
  auto flat = nn::flatten(m.params());
  json header{{"kind", "elevation_predictor"},
              {"version", 1},
              {"seq", LaepModel::kSeq},
              {"features", LaepModel::kFeat},
              {"hidden", LaepModel::kHidden},
              {"output_scale", LaepModel::kOutputScale},
              {"scales", scales_to_json(m.scales)},
              {"count", flat.size()}};
  write_file(path, header, flat);
}

LaepModel load_laep(const std::string& path) {
  auto [header, flat] = read_file(path);
  require_field(header, "kind", "elevation_predictor", path);
  require_field(header, "version", 1, path);
  require_field(header, "hidden", LaepModel::kHidden, path);
  LaepModel m;
  m.init_default();
  m.scales = scales_from_json(header.at("scales"));
  nn::unflatten(m.params(), flat);
  return m;
}

void save_inter_rp(const InterRpModel& m, const std::string& path) {
  auto flat = nn::flatten(m.params());
  json header{{"kind", "radius_predictor"},
              {"version", 1},
              {"seq", InterRpModel::kSeq},
              {"hidden", InterRpModel::kHidden},
              {"scales", scales_to_json(m.scales)},
              {"count", flat.size()}};
  write_file(path, header, flat);
}

InterRpModel load_inter_rp(const std::string& path) {
  auto [header, flat] = read_file(path);
  require_field(header, "kind", "radius_predictor", path);
  require_field(header, "version", 1, path);
  require_field(header, "hidden", InterRpModel::kHidden, path);
  InterRpModel m;
  m.init_default();
  m.scales = scales_from_json(header.at("scales"));
  nn::unflatten(m.params(), flat);
  return m;
}

// ---------------------------------------------------------------------------
// ModelSet

namespace {
namespace fs = std::filesystem;

std::string join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}
}  // namespace

ModelSet ModelSet::defaults() {
  ModelSet s;
  s.azimuth.init_default(true);
  s.radius.init_default(false);
  s.elevation.init_default(false);
  s.elevation_predictor.init_default();
  s.radius_predictor.init_default();
  return s;
}

ModelSet ModelSet::load_dir(const std::string& dir) {
  ModelSet s;
  s.azimuth = load_entropy_net("azimuth", join(dir, "entropy_azimuth.slpw"));
  s.radius = load_entropy_net("radius", join(dir, "entropy_radius.slpw"));
  s.elevation = load_entropy_net("elevation", join(dir, "entropy_elevation.slpw"));
  s.elevation_predictor = load_laep(join(dir, "predictor_elevation.slpw"));
  s.radius_predictor = load_inter_rp(join(dir, "predictor_radius.slpw"));
  return s;
}

void ModelSet::save_dir(const std::string& dir) const {
  fs::create_directories(dir);
  save_entropy_net(azimuth, "azimuth", join(dir, "entropy_azimuth.slpw"));
  save_entropy_net(radius, "radius", join(dir, "entropy_radius.slpw"));
  save_entropy_net(elevation, "elevation", join(dir, "entropy_elevation.slpw"));
  save_laep(elevation_predictor, join(dir, "predictor_elevation.slpw"));
  save_inter_rp(radius_predictor, join(dir, "predictor_radius.slpw"));
}

uint32_t ModelSet::weight_checksum() const {
  uint32_t crc = uint32_t(::crc32(0u, nullptr, 0));
  auto feed = [&crc](const std::vector<const nn::Param*>& params) {
    auto flat = nn::flatten(params);
    crc = uint32_t(::crc32(crc, reinterpret_cast<const unsigned char*>(flat.data()),
                           uInt(flat.size() * sizeof(float))));
  };
  feed(azimuth.params());
  feed(radius.params());
  feed(elevation.params());
  feed(elevation_predictor.params());
  feed(radius_predictor.params());
  return crc;
}

void ModelSet::quantize_weights() {
  auto round_trip = [](std::vector<nn::Param*> params) {
    auto flat = nn::flatten(nn::as_const(params));
    nn::unflatten(params, flat);
  };
  round_trip(azimuth.params());
  round_trip(radius.params());
  round_trip(elevation.params());
  round_trip(elevation_predictor.params());
  round_trip(radius_predictor.params());
}

}  // namespace slpcc

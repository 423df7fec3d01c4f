#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slpcc/nn.hpp"
#include "slpcc/stats.hpp"

namespace slpcc {

// Distribution head output for one residual; alpha stays 0 for two-parameter
// (symmetric) heads. sigma has already been through softplus + 1e-4.
struct ResidualParams {
  double mu = 0.0;
  double sigma = 1.0;
  double alpha = 0.0;
};

// Context-conditioned entropy model: 50 normalized residuals pass through
// three width-64 fully connected layers (rectified-linear, skip connections on
// the equal-width ones) into a head of width 3 (location, scale, skewness) or
// 2 (location, scale).
struct EntropyNet {
  static constexpr int kContext = 50;
  static constexpr int kWidth = 64;
  static constexpr double kSigmaFloor = 1e-4;

  bool skewed = false;
  nn::Linear fc0, fc1, fc2, head;

  struct Trace {
    nn::Vec x;              // kContext
    nn::Vec r0, r1, r2;     // relu outputs of each fc layer
    nn::Vec y1, y2;         // skip sums r1 + y0, r2 + y1 (y0 == r0)
    nn::Vec h;              // raw head output
  };

  // Zero weights with a scale-head bias of 2.0: a usable static model (mu 0,
  // sigma softplus(2)+floor, alpha 0) before any training.
  void init_default(bool skewed_head);
  void init_random(bool skewed_head, uint64_t seed);

  ResidualParams forward(const double* ctx, Trace* trace = nullptr) const;
  // Gradients w.r.t. the head's post-map outputs (mu, sigma, alpha).
  void backward(const Trace& trace, double d_mu, double d_sigma, double d_alpha);
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;

  int head_width() const { return skewed ? 3 : 2; }
};

// Fixed normalization applied to neighborhood features before they reach a
// predictor network; stored with the model so encoder and decoder agree.
struct FeatureScales {
  double r = 100.0;        // radius, meters
  double theta = 0.5;      // elevation, radians
  double dphi = 0.05;      // azimuth offset from the current point, radians
  double did = 4.0;        // laser id offset from the current point
  double residual = 0.5;   // dequantized radius residuals

  bool operator==(const FeatureScales&) const = default;
};

// Elevation corrector: a 50-step sequence (49 causal neighbors plus the
// virtual current point, 4 features each) through a three-layer LSTM,
// self-attention over all hidden states, mean pooling, and a two-stage MLP;
// the scalar output is scaled down and added to the causal tree mean.
struct LaepModel {
  static constexpr int kSeq = 50;
  static constexpr int kFeat = 4;
  static constexpr int kHidden = 8;
  static constexpr double kOutputScale = 0.01;

  nn::Lstm l0, l1, l2;
  nn::SelfAttention attn;
  nn::Linear m0, m1, m2;  // 8 -> 64 -> 32 -> 1, relu on hidden layers
  FeatureScales scales;

  struct Trace {
    nn::LstmTrace t0, t1, t2;
    nn::SelfAttention::Trace ta;
    nn::Vec attn_out;       // kSeq x kHidden
    nn::Vec pooled;         // kHidden
    nn::Vec a0, a1;         // relu activations of m0, m1
    double out_raw = 0.0;
  };

  void init_default();
  void init_random(uint64_t seed);

  // seq: kSeq x kFeat, already feature-normalized. Returns the correction.
  double forward(const double* seq, Trace* trace = nullptr) const;
  void backward(const Trace& trace, double d_correction);
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
};

// Inter-frame radius corrector: spatial / temporal / residual neighborhoods
// each run through their own LSTM; the three final hidden states are fused by
// self-attention, mean-pooled, and mapped to a scalar correction added to the
// previous reconstructed radius.
struct InterRpModel {
  static constexpr int kSeq = 50;
  static constexpr int kHidden = 16;

  nn::Lstm spatial;    // 4 features
  nn::Lstm temporal;   // 4 features
  nn::Lstm residual;   // 1 feature
  nn::SelfAttention attn;
  nn::Linear m0, m1, m2;  // 16 -> 64 -> 32 -> 1
  FeatureScales scales;

  struct Trace {
    nn::LstmTrace ts, tt, tr;
    nn::SelfAttention::Trace ta;
    nn::Vec states;     // 3 x kHidden final hidden states
    nn::Vec attn_out;   // 3 x kHidden
    nn::Vec pooled;     // kHidden
    nn::Vec a0, a1;
    double out_raw = 0.0;
  };

  void init_default();
  void init_random(uint64_t seed);

  double forward(const double* spatial_seq, const double* temporal_seq,
                 const double* residual_seq, Trace* trace = nullptr) const;
  void backward(const Trace& trace, double d_correction);
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
};

// Weight files: magic, little-endian u32 header length, JSON header (kind,
// shape fields, feature scales), then the parameters as little-endian float32
// in params() order. Inference always runs on weights that have been through
// this float32 round trip so encoder and decoder agree bit-exactly.
void save_entropy_net(const EntropyNet& net, const std::string& axis, const std::string& path);
EntropyNet load_entropy_net(const std::string& axis, const std::string& path);
void save_laep(const LaepModel& m, const std::string& path);
LaepModel load_laep(const std::string& path);
void save_inter_rp(const InterRpModel& m, const std::string& path);
InterRpModel load_inter_rp(const std::string& path);

// The five models the codec needs, persisted as fixed file names in one
// directory: entropy_azimuth / entropy_radius / entropy_elevation /
// predictor_elevation / predictor_radius, extension .slpw.
struct ModelSet {
  EntropyNet azimuth;    // skewed head
  EntropyNet radius;     // symmetric head
  EntropyNet elevation;  // symmetric head
  LaepModel elevation_predictor;
  InterRpModel radius_predictor;

  static ModelSet defaults();
  static ModelSet load_dir(const std::string& dir);  // throws if any file is missing
  void save_dir(const std::string& dir) const;

  // CRC-32 over every serialized weight, written into frame headers so a
  // decoder can reject mismatched models instead of producing garbage.
  uint32_t weight_checksum() const;

  // Round all weights through float32 (what save + load would do); call after
  // in-process training before using a model set for coding.
  void quantize_weights();
};

}  // namespace slpcc

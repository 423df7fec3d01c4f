#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slpcc/interframe.hpp"
#include "slpcc/models.hpp"
#include "slpcc/quant.hpp"
#include "slpcc/sensor.hpp"
#include "slpcc/tree.hpp"

namespace slpcc {

struct CodecConfig {
  QuantTuple qs{1, 2, 9};
  double i_frame_psnr_threshold = 35.0;  // dB; below it a frame codes as intra
  double psnr_peak = 100.0;              // meters, shared by decision and reports
  double tau = 0.4;                      // radius-variance split threshold
  int group_size = 200;                  // points per entropy-coding group
  int max_parallel_groups = 512;         // concurrency cap for group coding
  int workers = 0;                       // worker threads; 0 = hardware count
};

// A decoded (or encoder-side, identical) reconstruction plus the split index
// its bitstream carried; the split selects the upper part when this frame
// serves as the next frame's reference.
struct ReconstructedFrame {
  Frame frame;
  int32_t split = -1;
};

struct FrameStats {
  FrameKind kind = FrameKind::kIntra;
  double upper_psnr = 0.0;  // decision PSNR against the reference upper part
  size_t points = 0;
  size_t azimuth_bytes = 0, radius_bytes = 0, elevation_bytes = 0;  // payloads
  size_t header_bytes = 0;  // container minus payloads
  size_t total_bytes = 0;
  size_t groups = 0;  // entropy-coding groups per axis (same for all three)
  // Ideal code length (bits) of each axis stream under the models actually
  // used, excluding the per-group flush overhead; encoder-side only.
  double azimuth_nll = 0.0, radius_nll = 0.0, elevation_nll = 0.0;
  // Filled by encode_sequence when metrics are requested.
  double d1 = 0.0, d2 = 0.0, cd = 0.0;

  double bpip() const { return points ? 8.0 * double(total_bytes) / double(points) : 0.0; }
  double axis_bpip(size_t bytes) const {
    return points ? 8.0 * double(bytes) / double(points) : 0.0;
  }
};

// Optional encoder-side sample capture for model training. Entropy samples
// hold the 50-integer context window (flattened), the coded symbol, and the
// frame's normalization scale; predictor samples hold the network input
// sequences and the real-valued correction target. `stride` keeps every
// n-th sample.
struct TrainingCapture {
  struct EntropySamples {
    std::vector<int32_t> contexts;  // 50 ints per sample
    std::vector<int32_t> symbols;
    std::vector<double> scales;     // one per sample
    size_t count() const { return symbols.size(); }
  };
  EntropySamples azimuth, radius, elevation;

  std::vector<double> elevation_features;  // 50*4 per sample
  std::vector<double> elevation_targets;   // correction = theta - tree mean
  std::vector<double> radius_spatial;      // 50*4 per sample
  std::vector<double> radius_temporal;     // 50*4 per sample
  std::vector<double> radius_residuals;    // 50 per sample
  std::vector<double> radius_targets;      // correction = r - previous radius

  size_t stride = 1;
};

struct EncodedFrame {
  std::vector<uint8_t> bytes;
  ReconstructedFrame reconstruction;
  FrameStats stats;
};

// Encodes one frame against an optional reference reconstruction (closed
// loop: the returned reconstruction is bit-identical to what decode_frame
// produces). Throws std::invalid_argument on an empty frame or invalid
// config.
EncodedFrame encode_frame(const Frame& frame, const ReconstructedFrame* reference,
                          const CodecConfig& cfg, const ModelSet& models,
                          const SensorProfile& profile, TrainingCapture* capture = nullptr);

// Decodes a frame. `cfg` contributes only the worker count; everything
// layout-relevant travels in the bitstream. Throws DecodeError on checksum,
// magic, version, model, or profile mismatch.
ReconstructedFrame decode_frame(std::span<const uint8_t> bytes,
                                const ReconstructedFrame* reference, const CodecConfig& cfg,
                                const ModelSet& models, const SensorProfile& profile);

struct SequenceResult {
  std::vector<std::vector<uint8_t>> bitstreams;
  std::vector<FrameStats> stats;
};

// Encodes a sequence: frame 0 intra, later frames decided per frame; the
// reference is always the previous frame's reconstruction. When
// `with_metrics` is set, per-frame D1/D2/Chamfer against the originals are
// filled into the stats.
SequenceResult encode_sequence(std::span<const Frame> frames, const CodecConfig& cfg,
                               const ModelSet& models, const SensorProfile& profile,
                               bool with_metrics = false);

}  // namespace slpcc

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slpcc/codec.hpp"
#include "slpcc/models.hpp"
#include "slpcc/sensor.hpp"
#include "slpcc/tree.hpp"

namespace slpcc {

// Gradient-descent settings shared by all model trainers (Adam).
struct TrainConfig {
  int epochs = 50;
  int batch = 256;
  double lr = 1e-4;
  uint64_t seed = 1;
  double p_floor = 1e-6;  // probability smoothing inside the bit loss
};

// Throws std::invalid_argument on empty sample sets or non-positive
// epochs/batch/lr.

// Fits a context-conditioned entropy model by descending the mean code
// length -log2(bin probability + p_floor) of the captured symbols; contexts
// are normalized by their captured per-sample scales exactly as the codec
// normalizes at coding time. Returns the per-epoch mean bits per symbol.
std::vector<double> train_entropy(EntropyNet& net, const TrainingCapture::EntropySamples& samples,
                                  const TrainConfig& cfg);

// Fits the elevation corrector to captured (feature sequence, target
// correction) pairs by mean squared error. Returns per-epoch MSE.
std::vector<double> train_elevation_predictor(LaepModel& model, std::span<const double> features,
                                              std::span<const double> targets,
                                              const TrainConfig& cfg);

// Fits the inter-frame radius corrector likewise. The three spans hold, per
// sample, 50x4 spatial features, 50x4 temporal features, and 50 residuals.
std::vector<double> train_radius_predictor(InterRpModel& model, std::span<const double> spatial,
                                           std::span<const double> temporal,
                                           std::span<const double> residuals,
                                           std::span<const double> targets,
                                           const TrainConfig& cfg);

// End-to-end trainer: encodes the sequence once with `base` models (capture
// enabled, sampling every `stride`-th symbol), trains the three entropy
// heads, the elevation corrector and, when the capture saw predicted frames,
// the radius corrector, then rounds all weights through float32 so the
// result is coding-ready. Sample sets larger than max_samples_per_model are
// evenly subsampled.
struct TrainedModels {
  ModelSet models;
  std::vector<double> azimuth_bits, radius_bits, elevation_bits;  // loss curves
  std::vector<double> elevation_mse, radius_mse;                  // empty if untrained
};

TrainedModels train_models(std::span<const Frame> frames, const CodecConfig& codec_cfg,
                           const SensorProfile& profile, const TrainConfig& cfg,
                           const ModelSet& base, size_t stride = 1,
                           size_t max_samples_per_model = 100000);

}  // namespace slpcc

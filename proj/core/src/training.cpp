#include "slpcc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "slpcc/rng.hpp"
#include "slpcc/stats.hpp"

namespace slpcc {
namespace {

constexpr double kLn2 = 0.6931471805599453;

void check(const TrainConfig& cfg, size_t samples) {
  if (samples == 0) throw std::invalid_argument("training: no samples");
  if (cfg.epochs < 1) throw std::invalid_argument("training: epochs must be positive");
  if (cfg.batch < 1) throw std::invalid_argument("training: batch must be positive");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("training: learning rate must be positive");
  if (!(cfg.p_floor > 0.0)) throw std::invalid_argument("training: p_floor must be positive");
}

std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int64_t(i) - 1))]);
  return order;
}

// Runs the shared epoch/batch loop; `step` evaluates one sample's loss and
// accumulates gradients scaled by `weight`.
template <typename Step>
std::vector<double> run_epochs(std::span<nn::Param* const> params, size_t n,
                               const TrainConfig& cfg, Step&& step) {
  nn::Adam adam;
  adam.lr = cfg.lr;
  Rng rng(cfg.seed);
  std::vector<double> curve;
  curve.reserve(size_t(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<size_t> order = shuffled_indices(n, rng);
    double epoch_loss = 0.0;
    size_t at = 0;
    while (at < n) {
      const size_t batch = std::min(size_t(cfg.batch), n - at);
      nn::zero_grad(params);
      const double weight = 1.0 / double(batch);
      for (size_t b = 0; b < batch; ++b) epoch_loss += step(order[at + b], weight);
      adam.step(params);
      at += batch;
    }
    curve.push_back(epoch_loss / double(n));
  }
  return curve;
}

}  // namespace

std::vector<double> train_entropy(EntropyNet& net, const TrainingCapture::EntropySamples& samples,
                                  const TrainConfig& cfg) {
  const size_t n = samples.count();
  check(cfg, n);
  if (samples.contexts.size() != n * EntropyNet::kContext || samples.scales.size() != n)
    throw std::invalid_argument("training: inconsistent entropy sample arrays");

  const std::vector<nn::Param*> params = net.params();
  std::vector<double> ctx(EntropyNet::kContext);
  EntropyNet::Trace trace;
  return run_epochs(params, n, cfg, [&](size_t i, double weight) {
    const double scale = samples.scales[i];
    const int32_t* raw = samples.contexts.data() + i * EntropyNet::kContext;
    for (int j = 0; j < EntropyNet::kContext; ++j) ctx[size_t(j)] = double(raw[j]) / scale;
    const ResidualParams out = net.forward(ctx.data(), &trace);

    const double k = double(samples.symbols[i]);
    BinProb bin;
    if (net.skewed) {
      bin = skew_normal_bin(k, {out.mu, out.sigma, out.alpha});
    } else {
      bin = normal_bin(k, {out.mu, out.sigma});
    }
    const double p = bin.p + cfg.p_floor;
    const double d_p = -weight / (p * kLn2);  // d(-log2(p + floor))/dp, batch-averaged
    net.backward(trace, d_p * bin.d_mu, d_p * bin.d_sigma, d_p * bin.d_alpha);
    return -std::log2(p);
  });
}

std::vector<double> train_elevation_predictor(LaepModel& model, std::span<const double> features,
                                              std::span<const double> targets,
                                              const TrainConfig& cfg) {
  const size_t n = targets.size();
  check(cfg, n);
  constexpr size_t kBlock = size_t(LaepModel::kSeq) * LaepModel::kFeat;
  if (features.size() != n * kBlock)
    throw std::invalid_argument("training: inconsistent elevation sample arrays");

  const std::vector<nn::Param*> params = model.params();
  LaepModel::Trace trace;
  return run_epochs(params, n, cfg, [&](size_t i, double weight) {
    const double out = model.forward(features.data() + i * kBlock, &trace);
    const double err = out - targets[i];
    model.backward(trace, 2.0 * err * weight);
    return err * err;
  });
}

std::vector<double> train_radius_predictor(InterRpModel& model, std::span<const double> spatial,
                                           std::span<const double> temporal,
                                           std::span<const double> residuals,
                                           std::span<const double> targets,
                                           const TrainConfig& cfg) {
  const size_t n = targets.size();
  check(cfg, n);
  constexpr size_t kBlock = size_t(InterRpModel::kSeq) * 4;
  if (spatial.size() != n * kBlock || temporal.size() != n * kBlock ||
      residuals.size() != n * size_t(InterRpModel::kSeq))
    throw std::invalid_argument("training: inconsistent radius sample arrays");

  const std::vector<nn::Param*> params = model.params();
  InterRpModel::Trace trace;
  return run_epochs(params, n, cfg, [&](size_t i, double weight) {
    const double out =
        model.forward(spatial.data() + i * kBlock, temporal.data() + i * kBlock,
                      residuals.data() + i * size_t(InterRpModel::kSeq), &trace);
    const double err = out - targets[i];
    model.backward(trace, 2.0 * err * weight);
    return err * err;
  });
}

namespace {

// Even subsampling down to at most `cap` samples, preserving order.
std::vector<size_t> capped_picks(size_t n, size_t cap) {
  std::vector<size_t> picks;
  if (n <= cap) {
    picks.resize(n);
    std::iota(picks.begin(), picks.end(), size_t{0});
    return picks;
  }
  picks.reserve(cap);
  for (size_t i = 0; i < cap; ++i) picks.push_back(i * n / cap);
  return picks;
}

TrainingCapture::EntropySamples subsample(const TrainingCapture::EntropySamples& s, size_t cap) {
  const std::vector<size_t> picks = capped_picks(s.count(), cap);
  TrainingCapture::EntropySamples out;
  out.symbols.reserve(picks.size());
  out.scales.reserve(picks.size());
  out.contexts.reserve(picks.size() * EntropyNet::kContext);
  for (const size_t i : picks) {
    out.symbols.push_back(s.symbols[i]);
    out.scales.push_back(s.scales[i]);
    const int32_t* row = s.contexts.data() + i * EntropyNet::kContext;
    out.contexts.insert(out.contexts.end(), row, row + EntropyNet::kContext);
  }
  return out;
}

void subsample_rows(const std::vector<double>& in, size_t row, const std::vector<size_t>& picks,
                    std::vector<double>& out) {
  out.reserve(picks.size() * row);
  for (const size_t i : picks)
    out.insert(out.end(), in.begin() + long(i * row), in.begin() + long((i + 1) * row));
}

}  // namespace

TrainedModels train_models(std::span<const Frame> frames, const CodecConfig& codec_cfg,
                           const SensorProfile& profile, const TrainConfig& cfg,
                           const ModelSet& base, size_t stride, size_t max_samples_per_model) {
  if (frames.empty()) throw std::invalid_argument("training: no frames");
  if (stride == 0) throw std::invalid_argument("training: stride must be positive");
  if (max_samples_per_model == 0)
    throw std::invalid_argument("training: sample cap must be positive");

  TrainingCapture capture;
  capture.stride = stride;
  ReconstructedFrame previous;
  const ReconstructedFrame* reference = nullptr;
  for (const Frame& frame : frames) {
    EncodedFrame coded = encode_frame(frame, reference, codec_cfg, base, profile, &capture);
    previous = std::move(coded.reconstruction);
    reference = &previous;
  }

  TrainedModels result;
  result.models = base;
  result.azimuth_bits =
      train_entropy(result.models.azimuth, subsample(capture.azimuth, max_samples_per_model), cfg);
  result.radius_bits =
      train_entropy(result.models.radius, subsample(capture.radius, max_samples_per_model), cfg);
  result.elevation_bits = train_entropy(result.models.elevation,
                                        subsample(capture.elevation, max_samples_per_model), cfg);

  if (!capture.elevation_targets.empty()) {
    const std::vector<size_t> picks =
        capped_picks(capture.elevation_targets.size(), max_samples_per_model);
    std::vector<double> features, targets;
    subsample_rows(capture.elevation_features, size_t(LaepModel::kSeq) * LaepModel::kFeat, picks,
                   features);
    subsample_rows(capture.elevation_targets, 1, picks, targets);
    result.elevation_mse =
        train_elevation_predictor(result.models.elevation_predictor, features, targets, cfg);
  }
  if (!capture.radius_targets.empty()) {
    const std::vector<size_t> picks =
        capped_picks(capture.radius_targets.size(), max_samples_per_model);
    std::vector<double> spatial, temporal, residuals, targets;
    subsample_rows(capture.radius_spatial, size_t(InterRpModel::kSeq) * 4, picks, spatial);
    subsample_rows(capture.radius_temporal, size_t(InterRpModel::kSeq) * 4, picks, temporal);
    subsample_rows(capture.radius_residuals, size_t(InterRpModel::kSeq), picks, residuals);
    subsample_rows(capture.radius_targets, 1, picks, targets);
    result.radius_mse = train_radius_predictor(result.models.radius_predictor, spatial, temporal,
                                               residuals, targets, cfg);
  }

  result.models.quantize_weights();
  return result;
}

}  // namespace slpcc

#pragma once

#include <span>
#include <vector>

#include "guq/autodiff.hpp"
#include "guq/checkpoint.hpp"
#include "guq/gustgen.hpp"
#include "guq/nn.hpp"
#include "guq/normalization.hpp"
#include "guq/probhead.hpp"

namespace guq {

enum class EstimatorKind { probabilistic, deterministic };

/// Sensor-to-latent network with its input and target normalization.
/// Inputs and outputs of every public method are in physical units.
class SensorEstimator {
 public:
  SensorEstimator(nn::Network net, EstimatorKind kind, Normalization input_norm,
                  Normalization latent_norm);

  EstimatorKind kind() const { return kind_; }
  const nn::Network& network() const { return net_; }
  const Normalization& input_norm() const { return input_norm_; }
  const Normalization& latent_norm() const { return latent_norm_; }
  std::size_t input_dim() const { return net_.input_dim(); }
  std::size_t latent_dim() const { return latent_norm_.size(); }

  /// Per-row Gaussian predictions for a batch of stacked inputs. Each row is
  /// an independent pass with its own dropout mask in stochastic mode.
  std::vector<prob::GaussianPrediction> predict_gaussian(const Matrix& inputs, nn::Mode mode,
                                                         Rng* rng) const;
  /// Per-row latent means (B×l).
  Matrix predict_mean(const Matrix& inputs, nn::Mode mode, Rng* rng) const;

  /// Deterministic mean as a differentiable map on a tape, B×d → B×l.
  ad::Var mean_on_tape(ad::Var inputs) const;

  /// −log N(truth | prediction) for one input; probabilistic estimators only.
  double nll(std::span<const double> input, std::span<const double> truth, nn::Mode mode,
             Rng* rng) const;

  Checkpoint to_checkpoint() const;
  static SensorEstimator from_checkpoint(const Checkpoint& ckpt);

 private:
  Matrix normalize_inputs(const Matrix& inputs) const;

  nn::Network net_;
  EstimatorKind kind_;
  Normalization input_norm_;
  Normalization latent_norm_;
};

struct EstimatorTrainConfig {
  double dropout_rate = 0.05;
  double weight_decay = 1e-7;
  /// Variance of the Gaussian noise injected into pressure entries of the
  /// augmented copies; 0 disables augmentation.
  double noise_variance = 2.5e-5;
  nn::TrainConfig train;
};

struct EstimatorTrainResult {
  SensorEstimator estimator;
  nn::TrainResult history;
};

/// Trains on `latents[i]` as the target of `data.snapshots[i]`, with the
/// dataset's train/validation split. The probabilistic variant minimizes the
/// Gaussian NLL with dropout active in both phases; the deterministic variant
/// minimizes MSE and validates with dropout off.
EstimatorTrainResult train_estimator(const gust::Dataset& data,
                                     const std::vector<gust::Latent>& latents,
                                     EstimatorKind kind, const EstimatorTrainConfig& config);

/// Stacked inputs of the listed snapshots as rows.
Matrix stacked_inputs(const gust::Dataset& data, std::span<const std::uint32_t> rows);

}  // namespace guq

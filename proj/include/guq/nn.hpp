#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "guq/autodiff.hpp"
#include "guq/matrix.hpp"
#include "guq/rng.hpp"

namespace guq::nn {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh = 2 };

std::string to_string(Activation a);

/// y = act(W·x + b), W stored out×in.
struct DenseLayer {
  Matrix weights;
  Matrix bias;  // 1×out
  Activation activation = Activation::identity;
  /// Dropout applied to this layer's output; 0 disables it.
  double dropout_rate = 0.0;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }
};

/// Shape of a trunk-plus-heads network. Every trunk layer is followed by
/// dropout at `dropout_rate`; heads are identity layers fed by the last
/// trunk output and are concatenated in order.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  Activation hidden_activation = Activation::relu;
  std::vector<std::size_t> heads;
  double dropout_rate = 0.0;

  /// 33→64→128→256→512→256→128→64 ReLU trunk with mean (3) and
  /// lower-triangular (6) heads.
  static NetworkSpec sensor_estimator(double dropout_rate);
  /// Same trunk, single 3-wide mean head.
  static NetworkSpec deterministic_estimator(double dropout_rate);
};

enum class Mode { deterministic, stochastic };

/// Tape handles for every parameter, in layer order (W0, b0, W1, b1, ...).
struct BoundParams {
  std::vector<ad::Var> vars;
};

class Network {
 public:
  Network() = default;
  Network(std::vector<DenseLayer> trunk, std::vector<DenseLayer> heads);

  /// Glorot-uniform weights, zero biases.
  static Network create(const NetworkSpec& spec, std::uint64_t seed);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<std::size_t> head_dims() const;
  std::size_t parameter_count() const;
  double dropout_rate() const;

  const std::vector<DenseLayer>& trunk() const { return trunk_; }
  const std::vector<DenseLayer>& heads() const { return heads_; }
  std::vector<DenseLayer>& trunk() { return trunk_; }
  std::vector<DenseLayer>& heads() { return heads_; }

  /// Every parameter matrix, trunk then heads, weights before bias.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  /// True for weight matrices (subject to weight decay), false for biases.
  std::vector<bool> decay_mask() const;

  /// Binds parameters to `tape`, as gradient leaves or as references.
  BoundParams bind(ad::Tape& tape, bool requires_grad) const;

  /// Records a batched forward pass (rows are samples). Returns one Var per
  /// head, or the trunk output if the network has no heads. Stochastic mode
  /// draws a fresh Bernoulli keep-mask per entry and scales kept
  /// activations by 1/p. Throws NumericError naming the layer on non-finite
  /// activations.
  std::vector<ad::Var> forward(ad::Tape& tape, const BoundParams& params, ad::Var input,
                               Mode mode, Rng* rng) const;

  /// Batched forward without gradients; heads concatenated column-wise.
  Matrix forward_batch(const Matrix& inputs, Mode mode, Rng* rng) const;
  std::vector<double> forward(std::span<const double> x, Mode mode, Rng* rng) const;

 private:
  std::vector<DenseLayer> trunk_;
  std::vector<DenseLayer> heads_;
};

/// Mean of squared differences.
double mse_loss(std::span<const double> pred, std::span<const double> truth);
/// Tape version, mean over all entries.
ad::Var mse_loss(ad::Var pred, ad::Var truth);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Weight decay adds 2·λ·w to the gradient of
/// entries whose decay flag is set. Throws NumericError on non-finite
/// gradients before touching any parameter.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
               const std::vector<bool>& decay, AdamState& state, const AdamConfig& config);

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 1000;
  std::size_t patience = 50;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
  bool diverged = false;
  bool early_stopped = false;
};

enum class Phase { training, validation };

/// Loss over the samples `rows` of either split. `params` holds the bound
/// parameters of every trained network, concatenated in the order given to
/// train().
using BatchLoss = std::function<ad::Var(ad::Tape& tape, const std::vector<ad::Var>& params,
                                        std::span<const std::size_t> rows, Phase phase,
                                        Rng& rng)>;

struct TrainProblem {
  std::vector<Network*> networks;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  BatchLoss loss;
};

/// Mini-batch Adam with early stopping on validation loss. On return the
/// networks hold the parameters of the best validation epoch. A non-finite
/// validation loss stops training with `diverged` set.
TrainResult train(const TrainProblem& problem, const TrainConfig& config,
                  std::function<void(const EpochRecord&)> on_epoch = {});

/// Splits a flat bound-parameter list back into per-network handles.
std::vector<BoundParams> split_params(const std::vector<ad::Var>& flat,
                                      const std::vector<const Network*>& networks);

void write_network(std::ostream& out, const Network& net);
Network read_network(std::istream& in);

}  // namespace guq::nn

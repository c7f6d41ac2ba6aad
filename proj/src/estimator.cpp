#include "guq/estimator.hpp"

#include <cmath>

#include "guq/error.hpp"

namespace guq {

namespace {

Normalization fit_latent_norm(const std::vector<gust::Latent>& latents,
                              const std::vector<std::uint32_t>& rows) {
  Normalization n = Normalization::identity(gust::kLatentDim);
  for (std::size_t j = 0; j < gust::kLatentDim; ++j) {
    double mean = 0.0;
    for (auto r : rows) mean += latents[r][j];
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (auto r : rows) var += (latents[r][j] - mean) * (latents[r][j] - mean);
    var /= static_cast<double>(rows.size());
    n.shift[j] = mean;
    n.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return n;
}

Matrix diagonal(std::span<const double> d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

}  // namespace

SensorEstimator::SensorEstimator(nn::Network net, EstimatorKind kind, Normalization input_norm,
                                 Normalization latent_norm)
    : net_(std::move(net)),
      kind_(kind),
      input_norm_(std::move(input_norm)),
      latent_norm_(std::move(latent_norm)) {
  if (input_norm_.size() != net_.input_dim()) {
    throw ShapeError("SensorEstimator: input normalization has " +
                     std::to_string(input_norm_.size()) + " entries, network expects " +
                     std::to_string(net_.input_dim()));
  }
  const std::size_t l = latent_norm_.size();
  const auto heads = net_.head_dims();
  const bool ok = kind_ == EstimatorKind::probabilistic
                      ? heads.size() == 2 && heads[0] == l && heads[1] == prob::triangle_size(l)
                      : heads.size() == 1 && heads[0] == l;
  if (!ok) {
    throw ShapeError("SensorEstimator: network heads do not match a " +
                     std::string(kind_ == EstimatorKind::probabilistic ? "probabilistic"
                                                                        : "deterministic") +
                     " estimator of latent dimension " + std::to_string(l));
  }
}

Matrix SensorEstimator::normalize_inputs(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) {
    throw ShapeError("SensorEstimator: input width " + std::to_string(inputs.cols()) +
                     " does not match " + std::to_string(input_dim()));
  }
  Matrix x = inputs;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = input_norm_.apply(j, row[j]);
  }
  return x;
}

std::vector<prob::GaussianPrediction> SensorEstimator::predict_gaussian(const Matrix& inputs,
                                                                         nn::Mode mode,
                                                                         Rng* rng) const {
  if (kind_ != EstimatorKind::probabilistic) {
    throw ContractError("predict_gaussian: deterministic estimator has no covariance head");
  }
  const Matrix raw = net_.forward_batch(normalize_inputs(inputs), mode, rng);
  const std::size_t l = latent_dim();
  const std::size_t nt = prob::triangle_size(l);
  std::vector<prob::GaussianPrediction> out;
  out.reserve(raw.rows());
  std::vector<double> mean(l), tri(nt);
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    for (std::size_t i = 0; i < l; ++i) mean[i] = raw(r, i);
    for (std::size_t k = 0; k < nt; ++k) tri[k] = raw(r, l + k);
    prob::GaussianPrediction p = prob::make_prediction(mean, tri);
    // Back to physical units: μ ← s⊙μ + m, L ← diag(s)·L.
    for (std::size_t i = 0; i < l; ++i) {
      p.mean[i] = latent_norm_.invert(i, p.mean[i]);
      for (std::size_t j = 0; j <= i; ++j) p.lower(i, j) *= latent_norm_.scale[i];
    }
    for (std::size_t i = 0; i < l; ++i) {
      for (std::size_t j = 0; j < i; ++j) p.raw_tri[prob::triangle_index(i, j)] = p.lower(i, j);
      p.raw_tri[prob::triangle_index(i, i)] = std::log(p.lower(i, i) * p.lower(i, i));
    }
    out.push_back(std::move(p));
  }
  return out;
}

Matrix SensorEstimator::predict_mean(const Matrix& inputs, nn::Mode mode, Rng* rng) const {
  const Matrix raw = net_.forward_batch(normalize_inputs(inputs), mode, rng);
  const std::size_t l = latent_dim();
  Matrix out(raw.rows(), l);
  for (std::size_t r = 0; r < raw.rows(); ++r)
    for (std::size_t i = 0; i < l; ++i) out(r, i) = latent_norm_.invert(i, raw(r, i));
  return out;
}

ad::Var SensorEstimator::mean_on_tape(ad::Var inputs) const {
  ad::Tape& tape = *inputs.tape;
  const std::size_t d = input_dim();
  std::vector<double> inv_scale(d), offset(d);
  for (std::size_t j = 0; j < d; ++j) {
    inv_scale[j] = 1.0 / input_norm_.scale[j];
    offset[j] = -input_norm_.shift[j] * inv_scale[j];
  }
  const ad::Var x = ad::add_row(ad::matmul(inputs, tape.constant(diagonal(inv_scale))),
                                tape.constant(Matrix::row_vector(offset)));
  const nn::BoundParams params = net_.bind(tape, false);
  const auto heads = net_.forward(tape, params, x, nn::Mode::deterministic, nullptr);
  return ad::add_row(ad::matmul(heads.front(), tape.constant(diagonal(latent_norm_.scale))),
                     tape.constant(Matrix::row_vector(latent_norm_.shift)));
}

double SensorEstimator::nll(std::span<const double> input, std::span<const double> truth,
                            nn::Mode mode, Rng* rng) const {
  if (kind_ != EstimatorKind::probabilistic) {
    throw ContractError("nll: deterministic estimator cannot evaluate a likelihood");
  }
  const auto pred = predict_gaussian(Matrix::row_vector(input), mode, rng);
  return prob::nll_loss(truth, pred.front().mean, pred.front().lower);
}

Checkpoint SensorEstimator::to_checkpoint() const {
  Checkpoint c;
  c.kind = kind_ == EstimatorKind::probabilistic ? ModelKind::estimator_probabilistic
                                                 : ModelKind::estimator_deterministic;
  c.networks = {net_};
  c.norms = {input_norm_, latent_norm_};
  return c;
}

SensorEstimator SensorEstimator::from_checkpoint(const Checkpoint& ckpt) {
  EstimatorKind kind;
  if (ckpt.kind == ModelKind::estimator_probabilistic) {
    kind = EstimatorKind::probabilistic;
  } else if (ckpt.kind == ModelKind::estimator_deterministic) {
    kind = EstimatorKind::deterministic;
  } else {
    throw DataMismatchError(std::string("checkpoint holds a ") + to_string(ckpt.kind) +
                            ", not an estimator");
  }
  if (ckpt.networks.size() != 1 || ckpt.norms.size() != 2) {
    throw DataMismatchError("estimator checkpoint: expected 1 network and 2 normalizations");
  }
  return SensorEstimator(ckpt.networks[0], kind, ckpt.norms[0], ckpt.norms[1]);
}

Matrix stacked_inputs(const gust::Dataset& data, std::span<const std::uint32_t> rows) {
  Matrix m(rows.size(), gust::kStackedSize);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& p = data.snapshots.at(rows[r]).p_stacked;
    std::copy(p.begin(), p.end(), m.row(r).begin());
  }
  return m;
}

EstimatorTrainResult train_estimator(const gust::Dataset& data,
                                     const std::vector<gust::Latent>& latents,
                                     EstimatorKind kind, const EstimatorTrainConfig& config) {
  if (latents.size() != data.snapshots.size()) {
    throw DataMismatchError("train_estimator: " + std::to_string(latents.size()) +
                            " latent targets for " + std::to_string(data.snapshots.size()) +
                            " snapshots");
  }
  if (data.train.empty() || data.validation.empty()) {
    throw ContractError("train_estimator: empty train or validation split");
  }
  if (config.noise_variance < 0.0) throw ContractError("train_estimator: negative noise variance");

  const std::size_t n_orig = data.snapshots.size();
  gust::Dataset work;
  const gust::Dataset* source = &data;
  if (config.noise_variance > 0.0) {
    Rng noise_rng(mix_seed(config.train.seed ^ 0x6e6f697365ULL));
    work = gust::augment_noise(data, std::sqrt(config.noise_variance), noise_rng);
    source = &work;
  }

  const Normalization latent_norm = fit_latent_norm(latents, data.train);
  const nn::NetworkSpec spec = kind == EstimatorKind::probabilistic
                                   ? nn::NetworkSpec::sensor_estimator(config.dropout_rate)
                                   : nn::NetworkSpec::deterministic_estimator(config.dropout_rate);
  nn::Network net = nn::Network::create(spec, mix_seed(config.train.seed ^ 0x696e6974ULL));
  if (net.input_dim() != gust::kStackedSize) {
    throw ShapeError("train_estimator: estimator input must be 33 wide");
  }

  auto build = [&](const std::vector<std::uint32_t>& rows, Matrix& x, Matrix& y) {
    x = stacked_inputs(*source, rows);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto row = x.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = data.input_norm.apply(j, row[j]);
    }
    y = Matrix(rows.size(), gust::kLatentDim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& t = latents[rows[r] % n_orig];
      for (std::size_t j = 0; j < gust::kLatentDim; ++j) y(r, j) = latent_norm.apply(j, t[j]);
    }
  };
  Matrix train_x, train_y, val_x, val_y;
  build(source->train, train_x, train_y);
  build(source->validation, val_x, val_y);

  auto gather = [](const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = m.row(rows[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  };

  const nn::Network* net_ptr = &net;
  nn::TrainProblem problem;
  problem.networks = {&net};
  problem.train_size = train_x.rows();
  problem.validation_size = val_x.rows();
  problem.loss = [&, net_ptr](ad::Tape& tape, const std::vector<ad::Var>& params,
                              std::span<const std::size_t> rows, nn::Phase phase, Rng& rng) {
    const bool training = phase == nn::Phase::training;
    const Matrix& xs = training ? train_x : val_x;
    const Matrix& ys = training ? train_y : val_y;
    const ad::Var x = tape.constant(gather(xs, rows));
    const ad::Var y = tape.constant(gather(ys, rows));
    nn::BoundParams bound{params};
    if (kind == EstimatorKind::probabilistic) {
      const auto heads = net_ptr->forward(tape, bound, x, nn::Mode::stochastic, &rng);
      return prob::gaussian_nll(heads[0], heads[1], y);
    }
    const nn::Mode mode = training ? nn::Mode::stochastic : nn::Mode::deterministic;
    const auto heads = net_ptr->forward(tape, bound, x, mode, &rng);
    return nn::mse_loss(heads[0], y);
  };

  nn::TrainConfig tc = config.train;
  tc.weight_decay = config.weight_decay;
  nn::TrainResult history = nn::train(problem, tc);
  return {SensorEstimator(std::move(net), kind, data.input_norm, latent_norm), std::move(history)};
}

}  // namespace guq

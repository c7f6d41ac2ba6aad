#include "guq/nn.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "guq/binary_io.hpp"
#include "guq/error.hpp"

namespace guq::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "unknown";
}

NetworkSpec NetworkSpec::sensor_estimator(double dropout_rate) {
  NetworkSpec spec;
  spec.input_dim = 33;
  spec.hidden = {64, 128, 256, 512, 256, 128, 64};
  spec.hidden_activation = Activation::relu;
  spec.heads = {3, 6};
  spec.dropout_rate = dropout_rate;
  return spec;
}

NetworkSpec NetworkSpec::deterministic_estimator(double dropout_rate) {
  NetworkSpec spec = sensor_estimator(dropout_rate);
  spec.heads = {3};
  return spec;
}

Network::Network(std::vector<DenseLayer> trunk, std::vector<DenseLayer> heads)
    : trunk_(std::move(trunk)), heads_(std::move(heads)) {
  if (trunk_.empty() && heads_.empty()) throw ContractError("Network: no layers");
  for (std::size_t i = 1; i < trunk_.size(); ++i) {
    if (trunk_[i].in_dim() != trunk_[i - 1].out_dim()) {
      throw ShapeError("Network: trunk layer " + std::to_string(i) + " expects " +
                       std::to_string(trunk_[i].in_dim()) + " inputs but layer " +
                       std::to_string(i - 1) + " emits " + std::to_string(trunk_[i - 1].out_dim()));
    }
  }
  const std::size_t feed = trunk_.empty() ? heads_.front().in_dim() : trunk_.back().out_dim();
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    if (heads_[h].in_dim() != feed) {
      throw ShapeError("Network: head " + std::to_string(h) + " expects " +
                       std::to_string(heads_[h].in_dim()) + " inputs, trunk emits " +
                       std::to_string(feed));
    }
  }
  for (const auto* group : {&trunk_, &heads_}) {
    for (const auto& layer : *group) {
      if (layer.bias.rows() != 1 || layer.bias.cols() != layer.out_dim()) {
        throw ShapeError("Network: bias " + layer.bias.shape_string() + " does not match weights " +
                         layer.weights.shape_string());
      }
      if (!(layer.dropout_rate >= 0.0 && layer.dropout_rate < 1.0)) {
        throw ContractError("Network: dropout rate must lie in [0, 1)");
      }
    }
  }
}

Network Network::create(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0) throw ContractError("NetworkSpec: input_dim must be positive");
  Rng rng(seed);
  auto make = [&rng](std::size_t in, std::size_t out, Activation act, double rate) {
    DenseLayer layer;
    layer.weights = Matrix(out, in);
    layer.bias = Matrix(1, out);
    layer.activation = act;
    layer.dropout_rate = rate;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& w : layer.weights.values()) w = rng.uniform(-limit, limit);
    return layer;
  };
  std::vector<DenseLayer> trunk, heads;
  std::size_t width = spec.input_dim;
  for (std::size_t h : spec.hidden) {
    trunk.push_back(make(width, h, spec.hidden_activation, spec.dropout_rate));
    width = h;
  }
  for (std::size_t h : spec.heads) heads.push_back(make(width, h, Activation::identity, 0.0));
  return Network(std::move(trunk), std::move(heads));
}

std::size_t Network::input_dim() const {
  return trunk_.empty() ? heads_.front().in_dim() : trunk_.front().in_dim();
}

std::size_t Network::output_dim() const {
  if (heads_.empty()) return trunk_.back().out_dim();
  std::size_t total = 0;
  for (const auto& h : heads_) total += h.out_dim();
  return total;
}

std::vector<std::size_t> Network::head_dims() const {
  std::vector<std::size_t> dims;
  for (const auto& h : heads_) dims.push_back(h.out_dim());
  return dims;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* p : parameters()) n += p->size();
  return n;
}

double Network::dropout_rate() const {
  double rate = 0.0;
  for (const auto& l : trunk_) rate = std::max(rate, l.dropout_rate);
  return rate;
}

std::vector<Matrix*> Network::parameters() {
  std::vector<Matrix*> out;
  for (auto* group : {&trunk_, &heads_}) {
    for (auto& layer : *group) {
      out.push_back(&layer.weights);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::vector<const Matrix*> Network::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto* group : {&trunk_, &heads_}) {
    for (const auto& layer : *group) {
      out.push_back(&layer.weights);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::vector<bool> Network::decay_mask() const {
  std::vector<bool> mask;
  for (std::size_t i = 0; i < trunk_.size() + heads_.size(); ++i) {
    mask.push_back(true);
    mask.push_back(false);
  }
  return mask;
}

BoundParams Network::bind(ad::Tape& tape, bool requires_grad) const {
  BoundParams bound;
  for (const Matrix* p : parameters()) {
    bound.vars.push_back(requires_grad ? tape.variable(*p) : tape.constant_ref(*p));
  }
  return bound;
}

namespace {

ad::Var apply_layer(ad::Var h, ad::Var w, ad::Var b, const DenseLayer& layer,
                    const std::string& name, Mode mode, Rng* rng) {
  ad::Var z = ad::add_row(ad::matmul(h, ad::transpose(w)), b);
  switch (layer.activation) {
    case Activation::identity:
      break;
    case Activation::relu:
      z = ad::relu(z);
      break;
    case Activation::tanh:
      z = ad::tanh(z);
      break;
  }
  if (!z.value().all_finite()) {
    throw NumericError("forward: non-finite activation in " + name);
  }
  if (mode == Mode::stochastic && layer.dropout_rate > 0.0) {
    if (rng == nullptr) throw ContractError("forward: stochastic mode needs an rng");
    const double keep = 1.0 - layer.dropout_rate;
    const double inv_keep = 1.0 / keep;
    Matrix mask(z.rows(), z.cols());
    for (auto& m : mask.values()) m = rng->bernoulli(keep) ? inv_keep : 0.0;
    z = z * z.tape->constant(std::move(mask));
  }
  return z;
}

}  // namespace

std::vector<ad::Var> Network::forward(ad::Tape& tape, const BoundParams& params, ad::Var input,
                                      Mode mode, Rng* rng) const {
  if (params.vars.size() != 2 * (trunk_.size() + heads_.size())) {
    throw ContractError("forward: bound parameter count does not match network");
  }
  if (input.cols() != input_dim()) {
    throw ShapeError("forward: input width " + std::to_string(input.cols()) +
                     " does not match network input " + std::to_string(input_dim()));
  }
  (void)tape;
  ad::Var h = input;
  std::size_t p = 0;
  for (std::size_t i = 0; i < trunk_.size(); ++i, p += 2) {
    h = apply_layer(h, params.vars[p], params.vars[p + 1], trunk_[i],
                    "trunk layer " + std::to_string(i), mode, rng);
  }
  if (heads_.empty()) return {h};
  std::vector<ad::Var> outs;
  for (std::size_t i = 0; i < heads_.size(); ++i, p += 2) {
    outs.push_back(apply_layer(h, params.vars[p], params.vars[p + 1], heads_[i],
                               "head " + std::to_string(i), mode, rng));
  }
  return outs;
}

Matrix Network::forward_batch(const Matrix& inputs, Mode mode, Rng* rng) const {
  ad::Tape tape;
  const BoundParams params = bind(tape, false);
  const auto outs = forward(tape, params, tape.constant_ref(inputs), mode, rng);
  if (outs.size() == 1) return outs.front().value();
  Matrix result(inputs.rows(), output_dim());
  std::size_t offset = 0;
  for (const auto& o : outs) {
    const Matrix& v = o.value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) result(r, offset + c) = v(r, c);
    offset += v.cols();
  }
  return result;
}

std::vector<double> Network::forward(std::span<const double> x, Mode mode, Rng* rng) const {
  if (x.size() != input_dim()) {
    throw ShapeError("forward: input length " + std::to_string(x.size()) +
                     " does not match network input " + std::to_string(input_dim()));
  }
  return forward_batch(Matrix::row_vector(x), mode, rng).to_vector();
}

double mse_loss(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("mse_loss: lengths differ (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(truth.size()) + ")");
  }
  if (pred.empty()) throw ContractError("mse_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

ad::Var mse_loss(ad::Var pred, ad::Var truth) { return ad::mean(ad::square(pred - truth)); }

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
               const std::vector<bool>& decay, AdamState& state, const AdamConfig& config) {
  if (params.size() != grads.size() || decay.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and decay lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw ShapeError("adam_step: gradient " + grads[i].shape_string() +
                       " does not match parameter " + params[i]->shape_string());
    }
    if (!grads[i].all_finite()) {
      throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i) +
                         " " + grads[i].shape_string() + " at step " +
                         std::to_string(state.step + 1));
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* w = params[i]->data();
    const double* g = grads[i].data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    const double lambda2 = decay[i] ? 2.0 * config.weight_decay : 0.0;
    for (std::size_t k = 0; k < params[i]->size(); ++k) {
      const double gk = g[k] + lambda2 * w[k];
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

std::vector<BoundParams> split_params(const std::vector<ad::Var>& flat,
                                      const std::vector<const Network*>& networks) {
  std::vector<BoundParams> out;
  std::size_t offset = 0;
  for (const Network* net : networks) {
    const std::size_t n = 2 * (net->trunk().size() + net->heads().size());
    if (offset + n > flat.size()) throw ContractError("split_params: too few parameters");
    BoundParams b;
    b.vars.assign(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                  flat.begin() + static_cast<std::ptrdiff_t>(offset + n));
    out.push_back(std::move(b));
    offset += n;
  }
  if (offset != flat.size()) throw ContractError("split_params: parameter count mismatch");
  return out;
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(v[i - 1], v[j]);
  }
}

struct ParamSet {
  std::vector<Matrix*> params;
  std::vector<bool> decay;
};

ParamSet gather(const std::vector<Network*>& nets) {
  ParamSet s;
  for (Network* n : nets) {
    auto p = n->parameters();
    auto d = n->decay_mask();
    s.params.insert(s.params.end(), p.begin(), p.end());
    s.decay.insert(s.decay.end(), d.begin(), d.end());
  }
  return s;
}

std::vector<Matrix> snapshot(const ParamSet& s) {
  std::vector<Matrix> out;
  out.reserve(s.params.size());
  for (const Matrix* p : s.params) out.push_back(*p);
  return out;
}

void restore(ParamSet& s, const std::vector<Matrix>& saved) {
  for (std::size_t i = 0; i < s.params.size(); ++i) *s.params[i] = saved[i];
}

double evaluate_split(const TrainProblem& problem, const ParamSet& s, std::size_t n,
                      std::size_t batch_size, Phase phase, Rng& rng) {
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix* p : s.params) vars.push_back(tape.constant_ref(*p));
    const ad::Var loss = problem.loss(tape, vars, rows, phase, rng);
    total += loss.value()[0] * static_cast<double>(rows.size());
  }
  return total / static_cast<double>(n);
}

}  // namespace

TrainResult train(const TrainProblem& problem, const TrainConfig& config,
                  std::function<void(const EpochRecord&)> on_epoch) {
  if (problem.networks.empty()) throw ContractError("train: no networks");
  if (problem.train_size == 0 || problem.validation_size == 0) {
    throw ContractError("train: empty dataset (train " + std::to_string(problem.train_size) +
                        ", validation " + std::to_string(problem.validation_size) + ")");
  }
  if (config.batch_size == 0 || config.max_epochs == 0 || config.patience == 0 ||
      !(config.learning_rate > 0.0) || config.weight_decay < 0.0) {
    throw ContractError("train: batch size, epochs, patience and learning rate must be positive");
  }
  ParamSet set = gather(problem.networks);
  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  AdamState state;

  Rng rng(config.seed);
  const std::uint64_t validation_seed = mix_seed(config.seed ^ 0x76616c6964ULL);
  std::vector<std::size_t> order(problem.train_size);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.best_validation_loss = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best = snapshot(set);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(order, rng);
    double train_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      ad::Tape tape;
      std::vector<ad::Var> vars;
      vars.reserve(set.params.size());
      for (const Matrix* p : set.params) vars.push_back(tape.variable(*p));
      const ad::Var loss = problem.loss(tape, vars, rows, Phase::training, rng);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        result.diverged = true;
        break;
      }
      tape.backward(loss);
      std::vector<Matrix> grads;
      grads.reserve(vars.size());
      for (const auto& v : vars) grads.push_back(tape.grad(v));
      adam_step(set.params, grads, set.decay, state, adam);
      train_total += value * static_cast<double>(rows.size());
    }
    if (result.diverged) break;

    Rng validation_rng(validation_seed);
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = train_total / static_cast<double>(order.size());
    record.validation_loss = evaluate_split(problem, set, problem.validation_size,
                                            config.batch_size, Phase::validation, validation_rng);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (!std::isfinite(record.validation_loss)) {
      result.diverged = true;
      break;
    }
    if (record.validation_loss < result.best_validation_loss) {
      result.best_validation_loss = record.validation_loss;
      result.best_epoch = epoch;
      best = snapshot(set);
      stale = 0;
    } else if (++stale >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  restore(set, best);
  return result;
}

void write_network(std::ostream& out, const Network& net) {
  io::write_u32(out, static_cast<std::uint32_t>(net.input_dim()));
  io::write_u32(out, static_cast<std::uint32_t>(net.trunk().size()));
  io::write_u32(out, static_cast<std::uint32_t>(net.heads().size()));
  for (const auto* group : {&net.trunk(), &net.heads()}) {
    for (const auto& layer : *group) {
      io::write_u32(out, static_cast<std::uint32_t>(layer.in_dim()));
      io::write_u32(out, static_cast<std::uint32_t>(layer.out_dim()));
      io::write_u8(out, static_cast<std::uint8_t>(layer.activation));
      io::write_f64(out, layer.dropout_rate);
    }
  }
  for (const Matrix* p : net.parameters()) io::write_f64s(out, p->values());
}

Network read_network(std::istream& in) {
  const std::uint32_t input_dim = io::read_u32(in);
  const std::uint32_t n_trunk = io::read_u32(in);
  const std::uint32_t n_heads = io::read_u32(in);
  if (n_trunk + n_heads == 0 || n_trunk + n_heads > 4096) {
    throw IoError("checkpoint: implausible layer count");
  }
  std::vector<DenseLayer> trunk(n_trunk), heads(n_heads);
  for (auto* group : {&trunk, &heads}) {
    for (auto& layer : *group) {
      const std::uint32_t in_dim = io::read_u32(in);
      const std::uint32_t out_dim = io::read_u32(in);
      const std::uint8_t act = io::read_u8(in);
      if (act > 2) throw IoError("checkpoint: unknown activation tag " + std::to_string(act));
      if (static_cast<std::uint64_t>(in_dim) * out_dim > (1ULL << 28)) {
        throw IoError("checkpoint: implausible layer size");
      }
      layer.weights = Matrix(out_dim, in_dim);
      layer.bias = Matrix(1, out_dim);
      layer.activation = static_cast<Activation>(act);
      layer.dropout_rate = io::read_f64(in);
    }
  }
  for (auto* group : {&trunk, &heads}) {
    for (auto& layer : *group) {
      io::read_f64s(in, layer.weights.values());
      io::read_f64s(in, layer.bias.values());
    }
  }
  Network net(std::move(trunk), std::move(heads));
  if (net.input_dim() != input_dim) throw IoError("checkpoint: input dimension mismatch");
  return net;
}

}  // namespace guq::nn

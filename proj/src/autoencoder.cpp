#include "guq/autoencoder.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "guq/csv.hpp"
#include "guq/error.hpp"

namespace guq::ae {

double ae_loss(std::span<const double> field, std::span<const double> field_hat, double lift,
               double lift_hat, double beta) {
  if (field.size() != field_hat.size() || field.empty()) {
    throw ShapeError("ae_loss: fields of size " + std::to_string(field.size()) + " and " +
                     std::to_string(field_hat.size()));
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) sq += (field[i] - field_hat[i]) * (field[i] - field_hat[i]);
  const double dl = lift - lift_hat;
  return sq / static_cast<double>(field.size()) + beta * dl * dl;
}

ad::Var ae_loss(ad::Var field, ad::Var field_hat, ad::Var lift, ad::Var lift_hat, double beta) {
  if (field.rows() != field_hat.rows() || field.cols() != field_hat.cols() ||
      lift.rows() != lift_hat.rows() || lift.cols() != 1 || lift_hat.cols() != 1 ||
      lift.rows() != field.rows()) {
    throw ShapeError("ae_loss: fields " + field.value().shape_string() + " vs " +
                     field_hat.value().shape_string() + ", lifts " + lift.value().shape_string() +
                     " vs " + lift_hat.value().shape_string());
  }
  const ad::Var field_term = ad::mean(ad::square(field - field_hat));
  if (beta == 0.0) return field_term;
  return field_term + beta * ad::mean(ad::square(lift - lift_hat));
}

Autoencoder::Autoencoder(nn::Network encoder, nn::Network field_decoder,
                         nn::Network lift_decoder, double beta, Normalization field_norm,
                         Normalization lift_norm, std::size_t nx, std::size_t ny)
    : encoder_(std::move(encoder)),
      field_decoder_(std::move(field_decoder)),
      lift_decoder_(std::move(lift_decoder)),
      beta_(beta),
      field_norm_(std::move(field_norm)),
      lift_norm_(std::move(lift_norm)),
      nx_(nx),
      ny_(ny) {
  const std::size_t n = nx * ny;
  if (beta_ < 0.0) throw ContractError("Autoencoder: β must be nonnegative");
  if (field_norm_.size() != n || lift_norm_.size() != 1) {
    throw ShapeError("Autoencoder: normalization sizes do not match a " + std::to_string(nx) +
                     "x" + std::to_string(ny) + " grid");
  }
  if (encoder_.input_dim() != n + 1 || encoder_.output_dim() != kLatentDim) {
    throw ShapeError("Autoencoder: encoder maps " + std::to_string(encoder_.input_dim()) + " → " +
                     std::to_string(encoder_.output_dim()) + ", expected " +
                     std::to_string(n + 1) + " → 3");
  }
  if (field_decoder_.input_dim() != kLatentDim || field_decoder_.output_dim() != n) {
    throw ShapeError("Autoencoder: field decoder does not map 3 → " + std::to_string(n));
  }
  if (lift_decoder_.input_dim() != kLatentDim || lift_decoder_.output_dim() != 1) {
    throw ShapeError("Autoencoder: lift decoder does not map 3 → 1");
  }
}

Autoencoder Autoencoder::create(std::size_t nx, std::size_t ny, const AutoencoderConfig& config,
                                Normalization field_norm, Normalization lift_norm,
                                std::uint64_t seed) {
  const std::size_t n = nx * ny;
  std::vector<std::size_t> mirrored(config.hidden.rbegin(), config.hidden.rend());
  nn::NetworkSpec enc{n + 1, config.hidden, nn::Activation::tanh, {kLatentDim}, 0.0};
  nn::NetworkSpec fdec{kLatentDim, mirrored, nn::Activation::tanh, {n}, 0.0};
  nn::NetworkSpec ldec{kLatentDim, mirrored, nn::Activation::tanh, {1}, 0.0};
  return Autoencoder(nn::Network::create(enc, mix_seed(seed ^ 1)),
                     nn::Network::create(fdec, mix_seed(seed ^ 2)),
                     nn::Network::create(ldec, mix_seed(seed ^ 3)), config.beta,
                     std::move(field_norm), std::move(lift_norm), nx, ny);
}

Matrix Autoencoder::encode(const Matrix& fields, std::span<const double> lifts) const {
  const std::size_t n = field_size();
  if (fields.cols() != n || lifts.size() != fields.rows()) {
    throw ShapeError("encode: fields " + fields.shape_string() + " with " +
                     std::to_string(lifts.size()) + " lifts, grid has " + std::to_string(n) +
                     " pixels");
  }
  Matrix x(fields.rows(), n + 1);
  for (std::size_t r = 0; r < fields.rows(); ++r) {
    auto src = fields.row(r);
    auto dst = x.row(r);
    for (std::size_t j = 0; j < n; ++j) dst[j] = field_norm_.apply(j, src[j]);
    dst[n] = lift_norm_.apply(0, lifts[r]);
  }
  return encoder_.forward_batch(x, nn::Mode::deterministic, nullptr);
}

gust::Latent Autoencoder::encode(std::span<const double> field, double lift) const {
  const Matrix z = encode(Matrix::row_vector(field), std::span<const double>(&lift, 1));
  return {z(0, 0), z(0, 1), z(0, 2)};
}

void Autoencoder::decode(const Matrix& latents, Matrix& fields, std::vector<double>& lifts) const {
  if (latents.cols() != kLatentDim) {
    throw ShapeError("decode: latents " + latents.shape_string() + ", expected 3 columns");
  }
  fields = field_decoder_.forward_batch(latents, nn::Mode::deterministic, nullptr);
  for (std::size_t r = 0; r < fields.rows(); ++r) {
    auto row = fields.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = field_norm_.invert(j, row[j]);
  }
  const Matrix c = lift_decoder_.forward_batch(latents, nn::Mode::deterministic, nullptr);
  lifts.resize(c.rows());
  for (std::size_t r = 0; r < c.rows(); ++r) lifts[r] = lift_norm_.invert(0, c(r, 0));
}

Matrix Autoencoder::normalized_inputs(const gust::Dataset& data,
                                      std::span<const std::uint32_t> rows) const {
  const std::size_t n = field_size();
  if (data.grid.nx != nx_ || data.grid.ny != ny_) {
    throw DataMismatchError("autoencoder grid " + std::to_string(nx_) + "x" + std::to_string(ny_) +
                            " does not match dataset grid " + std::to_string(data.grid.nx) + "x" +
                            std::to_string(data.grid.ny));
  }
  Matrix x(rows.size(), n + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& s = data.snapshots.at(rows[r]);
    auto dst = x.row(r);
    for (std::size_t j = 0; j < n; ++j) dst[j] = field_norm_.apply(j, s.vorticity[j]);
    dst[n] = lift_norm_.apply(0, s.lift);
  }
  return x;
}

void Autoencoder::reparameterize(const Matrix& q, std::span<const double> center) {
  if (q.rows() != kLatentDim || q.cols() != kLatentDim || center.size() != kLatentDim) {
    throw ShapeError("reparameterize: expected a 3x3 rotation and a 3-vector center");
  }
  // Encoder output z becomes Q(z − c).
  nn::DenseLayer& head = encoder_.heads().front();
  Matrix shifted_bias = head.bias;
  for (std::size_t i = 0; i < kLatentDim; ++i) shifted_bias(0, i) -= center[i];
  head.weights = matmul(q, head.weights);
  head.bias = matmul_nt(shifted_bias, q);
  // Decoders see z = Qᵀz' + c.
  for (nn::Network* dec : {&field_decoder_, &lift_decoder_}) {
    nn::DenseLayer& first = dec->trunk().empty() ? dec->heads().front() : dec->trunk().front();
    const Matrix wc = matmul(first.weights, Matrix::column_vector(center));
    for (std::size_t i = 0; i < first.bias.cols(); ++i) first.bias(0, i) += wc(i, 0);
    first.weights = matmul_nt(first.weights, q);
  }
}

Checkpoint Autoencoder::to_checkpoint() const {
  Checkpoint c;
  c.kind = ModelKind::autoencoder;
  c.networks = {encoder_, field_decoder_, lift_decoder_};
  c.norms = {field_norm_, lift_norm_};
  c.scalars = {beta_, static_cast<double>(nx_), static_cast<double>(ny_)};
  return c;
}

Autoencoder Autoencoder::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::autoencoder) {
    throw DataMismatchError(std::string("checkpoint holds a ") + to_string(ckpt.kind) +
                            ", not an autoencoder");
  }
  if (ckpt.networks.size() != 3 || ckpt.norms.size() != 2 || ckpt.scalars.size() != 3) {
    throw DataMismatchError("autoencoder checkpoint: unexpected section counts");
  }
  return Autoencoder(ckpt.networks[0], ckpt.networks[1], ckpt.networks[2], ckpt.scalars[0],
                     ckpt.norms[0], ckpt.norms[1], static_cast<std::size_t>(ckpt.scalars[1]),
                     static_cast<std::size_t>(ckpt.scalars[2]));
}

void latent_frame(const Matrix& latents, std::span<const double> labels, Matrix& q,
                  std::vector<double>& center) {
  const std::size_t n = latents.rows();
  if (latents.cols() != kLatentDim || labels.size() != n || n < 2) {
    throw ShapeError("latent_frame: need N×3 latents with N ≥ 2 labels");
  }
  center.assign(kLatentDim, 0.0);
  double label_mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < kLatentDim; ++j) center[j] += latents(r, j);
    label_mean += labels[r];
  }
  for (auto& v : center) v /= static_cast<double>(n);
  label_mean /= static_cast<double>(n);

  Matrix zc(n, kLatentDim);
  Matrix a(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < kLatentDim; ++j) zc(r, j) = latents(r, j) - center[j];
    a(r, 0) = labels[r] - label_mean;
  }
  // Least-squares direction predicting the label.
  const Matrix gram = matmul_tn(zc, zc);
  const Matrix rhs = matmul_tn(zc, a);
  Eigen::Matrix3d g;
  Eigen::Vector3d b;
  for (std::size_t i = 0; i < 3; ++i) {
    b(i) = rhs(i, 0);
    for (std::size_t j = 0; j < 3; ++j) g(i, j) = gram(i, j);
  }
  Eigen::Vector3d w = g.ldlt().solve(b);
  if (!(w.norm() > 0.0) || !w.allFinite()) w = Eigen::Vector3d::UnitZ();
  w.normalize();

  // Variance directions orthogonal to w.
  const Eigen::Matrix3d p = Eigen::Matrix3d::Identity() - w * w.transpose();
  const Eigen::Matrix3d cov = p * g * p;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  // Ascending eigenvalues; the smallest belongs to w itself.
  Eigen::Vector3d u1 = eig.eigenvectors().col(2);
  Eigen::Vector3d u2 = eig.eigenvectors().col(1);
  auto fix_sign = [](Eigen::Vector3d& v) {
    Eigen::Index k;
    v.cwiseAbs().maxCoeff(&k);
    if (v(k) < 0) v = -v;
  };
  fix_sign(u1);
  u2 = u2 - u2.dot(w) * w - u2.dot(u1) * u1;
  u2.normalize();
  fix_sign(u2);

  q = Matrix(3, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    q(0, j) = u1(static_cast<Eigen::Index>(j));
    q(1, j) = u2(static_cast<Eigen::Index>(j));
    q(2, j) = w(static_cast<Eigen::Index>(j));
  }
}

AutoencoderTrainResult train_autoencoder(const gust::Dataset& data,
                                         const AutoencoderConfig& config) {
  if (data.train.empty() || data.validation.empty()) {
    throw ContractError("train_autoencoder: empty train or validation split");
  }
  Autoencoder model = Autoencoder::create(data.grid.nx, data.grid.ny, config, data.field_norm,
                                          data.lift_norm, config.train.seed);
  const std::size_t n = model.field_size();
  const Matrix train_x = model.normalized_inputs(data, data.train);
  const Matrix val_x = model.normalized_inputs(data, data.validation);

  auto gather = [](const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = m.row(rows[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  };

  std::vector<const nn::Network*> nets = {&model.encoder(), &model.field_decoder(),
                                          &model.lift_decoder()};
  const double beta = config.beta;
  nn::TrainProblem problem;
  problem.networks = {&model.encoder(), &model.field_decoder(), &model.lift_decoder()};
  problem.train_size = train_x.rows();
  problem.validation_size = val_x.rows();
  problem.loss = [&](ad::Tape& tape, const std::vector<ad::Var>& params,
                     std::span<const std::size_t> rows, nn::Phase phase, Rng&) {
    const Matrix& src = phase == nn::Phase::training ? train_x : val_x;
    const Matrix batch = gather(src, rows);
    Matrix field(batch.rows(), n), lift(batch.rows(), 1);
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      auto b = batch.row(r);
      std::copy(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n), field.row(r).begin());
      lift(r, 0) = b[n];
    }
    const auto bound = nn::split_params(params, nets);
    const ad::Var x = tape.constant(batch);
    const ad::Var z = nets[0]->forward(tape, bound[0], x, nn::Mode::deterministic, nullptr)[0];
    const ad::Var f_hat = nets[1]->forward(tape, bound[1], z, nn::Mode::deterministic, nullptr)[0];
    const ad::Var c_hat = nets[2]->forward(tape, bound[2], z, nn::Mode::deterministic, nullptr)[0];
    return ae_loss(tape.constant(std::move(field)), f_hat, tape.constant(std::move(lift)), c_hat,
                   beta);
  };
  nn::TrainResult history = nn::train(problem, config.train);

  // Canonical frame from the training latents.
  const Matrix z = model.encoder().forward_batch(train_x, nn::Mode::deterministic, nullptr);
  std::vector<double> alpha(data.train.size());
  for (std::size_t r = 0; r < data.train.size(); ++r)
    alpha[r] = data.case_of(data.snapshots[data.train[r]]).alpha_deg;
  Matrix q;
  std::vector<double> center;
  latent_frame(z, alpha, q, center);
  model.reparameterize(q, center);

  auto trajs = latent_trajectories(model, data);
  return {std::move(model), std::move(history), std::move(trajs)};
}

std::vector<gust::Latent> encode_dataset(const Autoencoder& model, const gust::Dataset& data) {
  std::vector<std::uint32_t> all(data.snapshots.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
  const Matrix z =
      model.encoder().forward_batch(model.normalized_inputs(data, all), nn::Mode::deterministic,
                                    nullptr);
  std::vector<gust::Latent> out(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) out[i] = {z(i, 0), z(i, 1), z(i, 2)};
  return out;
}

std::vector<LatentTrajectory> latent_trajectories(const Autoencoder& model,
                                                  const gust::Dataset& data) {
  const std::vector<gust::Latent> z = encode_dataset(model, data);
  std::vector<LatentTrajectory> out;
  for (const auto& c : data.cases) {
    LatentTrajectory tr;
    tr.case_id = c.id;
    for (auto i : data.case_snapshots(c.id)) {
      tr.time_index.push_back(data.snapshots[i].time_index);
      tr.t.push_back(data.snapshots[i].t);
      tr.xi.push_back(z[i]);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

double field_mse(const Autoencoder& model, const gust::Dataset& data,
                 std::span<const std::uint32_t> rows) {
  if (rows.empty()) throw ContractError("field_mse: no rows");
  const std::size_t n = model.field_size();
  const Matrix x = model.normalized_inputs(data, rows);
  const Matrix z = model.encoder().forward_batch(x, nn::Mode::deterministic, nullptr);
  const Matrix f = model.field_decoder().forward_batch(z, nn::Mode::deterministic, nullptr);
  double sq = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < n; ++j) sq += (f(r, j) - x(r, j)) * (f(r, j) - x(r, j));
  return sq / static_cast<double>(rows.size() * n);
}

PodBaseline pod_baseline(const gust::Dataset& data, std::size_t rank) {
  const std::size_t n = data.grid.size();
  if (rank == 0 || rank > n) throw ContractError("pod_baseline: rank out of range");
  auto fields = [&](const std::vector<std::uint32_t>& rows) {
    Matrix x(rows.size(), n);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& v = data.snapshots.at(rows[r]).vorticity;
      for (std::size_t j = 0; j < n; ++j) x(r, j) = data.field_norm.apply(j, v[j]);
    }
    return x;
  };
  const Matrix train = fields(data.train);
  const SymmetricEigen eig = symmetric_eigen(matmul_tn(train, train));
  PodBaseline pod;
  pod.modes = Matrix(n, rank);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < rank; ++j) pod.modes(i, j) = eig.vectors(i, j);

  auto score = [&](const Matrix& x) {
    const Matrix coeff = matmul(x, pod.modes);
    const Matrix recon = matmul_nt(coeff, pod.modes);
    double sq = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - recon[k]) * (x[k] - recon[k]);
    return sq / static_cast<double>(x.size());
  };
  pod.train_mse = score(train);
  pod.validation_mse = data.validation.empty() ? 0.0 : score(fields(data.validation));
  return pod;
}

void write_trajectories_csv(std::ostream& out, const std::vector<LatentTrajectory>& trajs) {
  out << "case_id,time_index,t,xi1,xi2,xi3\n";
  for (const auto& tr : trajs) {
    for (std::size_t k = 0; k < tr.xi.size(); ++k) {
      csv::Row(out) << tr.case_id << tr.time_index[k] << tr.t[k] << tr.xi[k][0] << tr.xi[k][1]
                    << tr.xi[k][2];
    }
  }
}

std::vector<LatentTrajectory> read_trajectories_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("case_id,time_index,t,xi1,xi2,xi3", 0) != 0) {
    throw DataMismatchError("latent trajectory CSV: missing or unexpected header");
  }
  std::vector<LatentTrajectory> out;
  std::map<int, std::size_t> slot;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> parts;
    while (std::getline(ss, field, ',')) parts.push_back(field);
    if (parts.size() != 6) {
      throw DataMismatchError("latent trajectory CSV line " + std::to_string(line_no) +
                              ": expected 6 fields");
    }
    try {
      const int id = std::stoi(parts[0]);
      auto [it, inserted] = slot.try_emplace(id, out.size());
      if (inserted) out.push_back(LatentTrajectory{id, {}, {}, {}});
      LatentTrajectory& tr = out[it->second];
      tr.time_index.push_back(static_cast<std::uint32_t>(std::stoul(parts[1])));
      tr.t.push_back(std::stod(parts[2]));
      tr.xi.push_back({std::stod(parts[3]), std::stod(parts[4]), std::stod(parts[5])});
    } catch (const std::logic_error&) {
      throw DataMismatchError("latent trajectory CSV line " + std::to_string(line_no) +
                              ": malformed number");
    }
  }
  return out;
}

std::vector<gust::Latent> latents_for(const gust::Dataset& data,
                                      const std::vector<LatentTrajectory>& trajs) {
  std::map<std::pair<int, std::uint32_t>, gust::Latent> lookup;
  for (const auto& tr : trajs)
    for (std::size_t k = 0; k < tr.xi.size(); ++k) lookup[{tr.case_id, tr.time_index[k]}] = tr.xi[k];
  std::vector<gust::Latent> out;
  out.reserve(data.snapshots.size());
  for (const auto& s : data.snapshots) {
    auto it = lookup.find({s.case_id, s.time_index});
    if (it == lookup.end()) {
      throw DataMismatchError("no latent target for case " + std::to_string(s.case_id) +
                              " time index " + std::to_string(s.time_index));
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace guq::ae

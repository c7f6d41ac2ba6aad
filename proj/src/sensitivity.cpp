#include "guq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "guq/csv.hpp"
#include "guq/error.hpp"

namespace guq::sens {

GramianResult decompose_gramian(const Matrix& gramian) {
  if (gramian.rows() != gramian.cols()) {
    throw ShapeError("decompose_gramian: Gramian must be square, got " + gramian.shape_string());
  }
  GramianResult r;
  r.gramian = symmetric_part(gramian);
  SymmetricEigen eig = symmetric_eigen(r.gramian);
  r.eigenvalues = std::move(eig.values);
  r.eigenvectors = std::move(eig.vectors);
  // Fix the sign so repeated runs give comparable modes.
  for (std::size_t j = 0; j < r.eigenvectors.cols(); ++j) {
    std::size_t peak = 0;
    for (std::size_t i = 1; i < r.eigenvectors.rows(); ++i) {
      if (std::abs(r.eigenvectors(i, j)) > std::abs(r.eigenvectors(peak, j))) peak = i;
    }
    if (r.eigenvectors(peak, j) < 0.0) {
      for (std::size_t i = 0; i < r.eigenvectors.rows(); ++i) r.eigenvectors(i, j) = -r.eigenvectors(i, j);
    }
  }
  return r;
}

GramianResult measurement_gramian(const ad::VectorFunction& f, std::span<const double> base,
                                  const NoiseSampler& sampler, std::size_t samples, Rng& rng) {
  if (samples == 0) throw ContractError("measurement_gramian: need at least one sample");
  const std::size_t d = base.size();
  Matrix batch(samples, d);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::vector<double> eta = sampler(rng);
    if (eta.size() != d) {
      throw ShapeError("measurement_gramian: noise sample has " + std::to_string(eta.size()) +
                       " entries, input has " + std::to_string(d));
    }
    auto row = batch.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = base[j] + eta[j];
  }
  const std::vector<Matrix> jacobians = ad::batch_jacobian(f, batch);
  Matrix c(d, d);
  for (const Matrix& j : jacobians) axpy(c, 1.0, matmul_tn(j, j));
  return decompose_gramian(scaled(c, 1.0 / static_cast<double>(samples)));
}

NoiseSampler white_noise(std::size_t d, std::size_t count, double variance) {
  if (count > d) throw ContractError("white_noise: noisy count exceeds dimension");
  if (variance < 0.0) throw ContractError("white_noise: negative variance");
  const double sd = std::sqrt(variance);
  return [d, count, sd](Rng& rng) {
    std::vector<double> eta(d, 0.0);
    for (std::size_t j = 0; j < count; ++j) eta[j] = sd * rng.normal();
    return eta;
  };
}

NoiseSampler no_noise(std::size_t d) {
  return [d](Rng&) { return std::vector<double>(d, 0.0); };
}

std::size_t select_rank(std::span<const double> eigenvalues, double gamma) {
  if (eigenvalues.empty()) throw ContractError("select_rank: empty spectrum");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("select_rank: γ must be in [0, 1]");
  // Rounding leaves PSD spectra with tiny negative tails; those count as 0.
  const double floor = -kNegativeTolerance * std::max(1.0, std::abs(eigenvalues.front()));
  double total = 0.0;
  for (double v : eigenvalues) {
    if (v < floor) throw ContractError("select_rank: negative eigenvalue " + csv::num(v));
    total += std::max(v, 0.0);
  }
  if (total == 0.0) return 0;
  // Relative slack so a cumulative share that equals γ in exact arithmetic
  // is not rejected over a rounding error.
  const double target = gamma * total * (1.0 - 1e-12);
  double cumulative = 0.0;
  for (std::size_t r = 0; r < eigenvalues.size(); ++r) {
    cumulative += std::max(eigenvalues[r], 0.0);
    if (cumulative >= target) return r + 1;
  }
  return eigenvalues.size();
}

NoiseModel make_noise_model(const GramianResult& g, double gamma, double variance,
                            std::vector<bool> mask) {
  const std::size_t d = g.eigenvectors.rows();
  if (mask.empty()) mask.assign(d, false);
  if (mask.size() != d) throw ShapeError("make_noise_model: mask length does not match Gramian");
  if (variance < 0.0) throw ContractError("make_noise_model: negative variance");
  const std::size_t r = select_rank(g.eigenvalues, gamma);
  NoiseModel m;
  m.modes = Matrix(d, r);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < r; ++j) m.modes(i, j) = g.eigenvectors(i, j);
  m.variance = variance;
  m.mask = std::move(mask);
  return m;
}

std::vector<double> structured_noise(const NoiseModel& model, Rng& rng) {
  const std::size_t d = model.modes.rows();
  std::vector<double> eta(d, 0.0);
  const double sd = std::sqrt(model.variance);
  for (std::size_t j = 0; j < model.modes.cols(); ++j) {
    const double zeta = sd * rng.normal();
    for (std::size_t i = 0; i < d; ++i) eta[i] += zeta * model.modes(i, j);
  }
  for (std::size_t i = 0; i < d; ++i)
    if (i < model.mask.size() && model.mask[i]) eta[i] = 0.0;
  return eta;
}

std::vector<bool> coordinate_mask() {
  std::vector<bool> mask(gust::kStackedSize, true);
  for (std::size_t k = 0; k < gust::kSensorCount; ++k)
    mask[gust::SensorLayout::pressure_slot(k)] = false;
  return mask;
}

std::array<double, gust::kSensorCount> sensor_importance(const Matrix& eigenvectors,
                                                         std::size_t mode,
                                                         const gust::SensorLayout& layout) {
  if (mode >= eigenvectors.cols()) {
    throw ContractError("sensor_importance: mode " + std::to_string(mode) + " out of range for " +
                        std::to_string(eigenvectors.cols()) + " modes");
  }
  if (eigenvectors.rows() < gust::kSensorCount) {
    throw ShapeError("sensor_importance: eigenvectors " + eigenvectors.shape_string() +
                     " have fewer rows than sensors");
  }
  std::array<double, gust::kSensorCount> w{};
  std::size_t arg = 0;
  for (std::size_t k = 0; k < gust::kSensorCount; ++k) {
    w[k] = eigenvectors(layout.pressure_slot(k), mode);
    if (std::abs(w[k]) > std::abs(w[arg])) arg = k;
  }
  if (w[arg] < 0.0)
    for (auto& v : w) v = -v;
  return w;
}

double energy_share(std::span<const double> eigenvalues, std::size_t mode) {
  if (mode >= eigenvalues.size()) throw ContractError("energy_share: mode out of range");
  double total = 0.0;
  for (double v : eigenvalues) total += std::max(v, 0.0);
  return total > 0.0 ? std::max(eigenvalues[mode], 0.0) / total : 0.0;
}

void write_importance_csv(std::ostream& out, const std::vector<ImportanceRow>& rows) {
  out << "time_index,mode,share";
  for (std::size_t k = 1; k <= gust::kSensorCount; ++k) out << ",s" << k;
  out << '\n';
  for (const auto& r : rows) {
    csv::Row row(out);
    row << r.time_index << static_cast<unsigned long>(r.mode) << r.share;
    for (double w : r.weights) row << w;
  }
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace guq::sens

#include "guq/uq.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "guq/csv.hpp"
#include "guq/error.hpp"

namespace guq::uq {

PredictiveEnsemble mc_predict(const SensorEstimator& est, std::span<const double> x,
                              std::size_t passes, Rng& rng) {
  if (passes < 2) throw ContractError("mc_predict: need at least 2 passes, got " +
                                      std::to_string(passes));
  if (x.size() != est.input_dim()) {
    throw ShapeError("mc_predict: input length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(est.input_dim()));
  }
  Matrix batch(passes, x.size());
  for (std::size_t t = 0; t < passes; ++t) std::copy(x.begin(), x.end(), batch.row(t).begin());
  return {est.predict_gaussian(batch, nn::Mode::stochastic, &rng)};
}

std::vector<PredictiveEnsemble> mc_predict_batch(const SensorEstimator& est, const Matrix& inputs,
                                                 std::size_t passes, std::uint64_t seed) {
  std::vector<PredictiveEnsemble> out;
  out.reserve(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    Rng rng = Rng::substream(seed, i);
    out.push_back(mc_predict(est, inputs.row(i), passes, rng));
  }
  return out;
}

namespace {

void check_ensemble(const PredictiveEnsemble& ens, std::size_t min_size, const char* who) {
  if (ens.size() < min_size) {
    throw ContractError(std::string(who) + ": ensemble has " + std::to_string(ens.size()) +
                        " entries, need at least " + std::to_string(min_size));
  }
  const std::size_t l = ens.dim();
  for (const auto& e : ens.entries) {
    if (e.mean.size() != l || e.lower.rows() != l || e.lower.cols() != l) {
      throw ShapeError(std::string(who) + ": ensemble entries disagree in dimension");
    }
  }
}

std::vector<double> mean_of_means(const PredictiveEnsemble& ens) {
  const std::size_t l = ens.dim();
  std::vector<double> mu(l, 0.0);
  for (const auto& e : ens.entries)
    for (std::size_t i = 0; i < l; ++i) mu[i] += e.mean[i];
  for (auto& v : mu) v /= static_cast<double>(ens.size());
  return mu;
}

}  // namespace

prob::LatentDistribution aleatoric_distribution(const PredictiveEnsemble& ens) {
  check_ensemble(ens, 1, "aleatoric_distribution");
  const std::size_t l = ens.dim();
  Matrix cov(l, l);
  for (const auto& e : ens.entries) axpy(cov, 1.0, e.covariance());
  cov = scaled(cov, 1.0 / static_cast<double>(ens.size()));
  return {mean_of_means(ens), std::move(cov), prob::UncertaintyKind::aleatoric};
}

prob::LatentDistribution epistemic_distribution(const PredictiveEnsemble& ens) {
  check_ensemble(ens, 2, "epistemic_distribution");
  const std::size_t l = ens.dim();
  std::vector<double> mu = mean_of_means(ens);
  Matrix cov(l, l);
  for (const auto& e : ens.entries) {
    for (std::size_t i = 0; i < l; ++i) {
      const double di = e.mean[i] - mu[i];
      for (std::size_t j = 0; j < l; ++j) cov(i, j) += di * (e.mean[j] - mu[j]);
    }
  }
  cov = scaled(cov, 1.0 / static_cast<double>(ens.size() - 1));
  return {std::move(mu), std::move(cov), prob::UncertaintyKind::epistemic};
}

LinearDecoder::LinearDecoder(Matrix a, std::vector<double> offset,
                             std::vector<double> lift_weights, double lift_offset)
    : a_(std::move(a)),
      offset_(std::move(offset)),
      lift_weights_(std::move(lift_weights)),
      lift_offset_(lift_offset) {
  if (offset_.size() != a_.rows() || lift_weights_.size() != a_.cols()) {
    throw ShapeError("LinearDecoder: offset/lift sizes do not match A " + a_.shape_string());
  }
}

LinearDecoder::LinearDecoder(Matrix a)
    : LinearDecoder(a, std::vector<double>(a.rows(), 0.0), std::vector<double>(a.cols(), 0.0),
                    0.0) {}

void LinearDecoder::decode(const Matrix& latents, Matrix& fields,
                           std::vector<double>& lifts) const {
  if (latents.cols() != a_.cols()) {
    throw ShapeError("LinearDecoder: latents " + latents.shape_string() + " vs A " +
                     a_.shape_string());
  }
  fields = matmul_nt(latents, a_);
  lifts.assign(latents.rows(), lift_offset_);
  for (std::size_t m = 0; m < latents.rows(); ++m) {
    auto row = fields.row(m);
    for (std::size_t p = 0; p < row.size(); ++p) row[p] += offset_[p];
    for (std::size_t j = 0; j < latents.cols(); ++j) lifts[m] += lift_weights_[j] * latents(m, j);
  }
}

FieldStats reconstruct_stats(const prob::LatentDistribution& dist, const LatentDecoder& decoder,
                             std::size_t samples, Rng& rng) {
  if (samples < 2) throw ContractError("reconstruct_stats: need at least 2 samples");
  if (dist.dim() != decoder.latent_dim()) {
    throw ShapeError("reconstruct_stats: distribution dimension " + std::to_string(dist.dim()) +
                     " vs decoder latent dimension " + std::to_string(decoder.latent_dim()));
  }
  const Matrix draws = prob::sample_gaussian(dist, samples, rng);
  Matrix fields;
  std::vector<double> lifts;
  decoder.decode(draws, fields, lifts);
  const std::size_t n = decoder.field_size();
  if (fields.rows() != samples || fields.cols() != n || lifts.size() != samples) {
    throw ShapeError("reconstruct_stats: decoder returned " + fields.shape_string() +
                     ", expected " + shape_string(samples, n));
  }

  FieldStats s;
  s.nx = decoder.grid_nx();
  s.ny = decoder.grid_ny();
  s.mean.assign(n, 0.0);
  s.variance.assign(n, 0.0);
  const double inv_m = 1.0 / static_cast<double>(samples);
  for (std::size_t m = 0; m < samples; ++m) {
    auto row = fields.row(m);
    for (std::size_t p = 0; p < n; ++p) s.mean[p] += row[p];
  }
  for (auto& v : s.mean) v *= inv_m;
  for (std::size_t m = 0; m < samples; ++m) {
    auto row = fields.row(m);
    for (std::size_t p = 0; p < n; ++p) {
      const double d = row[p] - s.mean[p];
      s.variance[p] += d * d;
    }
  }
  const double inv_m1 = 1.0 / static_cast<double>(samples - 1);
  for (auto& v : s.variance) v *= inv_m1;

  for (double c : lifts) s.lift_mean += c;
  s.lift_mean *= inv_m;
  for (double c : lifts) s.lift_variance += (c - s.lift_mean) * (c - s.lift_mean);
  s.lift_variance *= inv_m1;
  return s;
}

double avg_loglikelihood(const FieldStats& stats, std::span<const double> truth) {
  if (truth.size() != stats.mean.size() || stats.variance.size() != stats.mean.size()) {
    throw ShapeError("avg_loglikelihood: truth has " + std::to_string(truth.size()) +
                     " pixels, stats have " + std::to_string(stats.mean.size()));
  }
  if (truth.empty()) throw ContractError("avg_loglikelihood: empty field");
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    const double var = std::max(stats.variance[p], kVarianceFloor);
    const double d = truth[p] - stats.mean[p];
    total += -0.5 * (log_2pi + std::log(var) + d * d / var);
  }
  return total / static_cast<double>(truth.size());
}

double chi2_quantile(std::size_t dof, double level) {
  if (dof == 0 || !(level > 0.0 && level < 1.0)) {
    throw ContractError("chi2_quantile: need dof > 0 and level in (0, 1)");
  }
  return boost::math::quantile(boost::math::chi_squared(static_cast<double>(dof)), level);
}

EllipseSpec confidence_ellipse(const prob::LatentDistribution& dist,
                               std::array<std::size_t, 2> plane, double level) {
  const std::size_t l = dist.dim();
  if (plane[0] >= l || plane[1] >= l || plane[0] == plane[1]) {
    throw ContractError("confidence_ellipse: invalid plane (" + std::to_string(plane[0]) + ", " +
                        std::to_string(plane[1]) + ") for dimension " + std::to_string(l));
  }
  Matrix marginal(2, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) marginal(i, j) = dist.covariance(plane[i], plane[j]);
  marginal = symmetric_part(marginal);
  const SymmetricEigen eig = symmetric_eigen(marginal);
  const double scale = std::max(std::abs(eig.values[0]), 1e-300);
  if (eig.values[1] < -1e-12 * scale) {
    throw NumericError("confidence_ellipse: marginal covariance is not PSD (eigenvalue " +
                       csv::num(eig.values[1]) + ")");
  }
  const double q = chi2_quantile(2, level);
  EllipseSpec e;
  e.plane = plane;
  e.center = {dist.mean[plane[0]], dist.mean[plane[1]]};
  e.semi_axes = {std::sqrt(q * std::max(eig.values[0], 0.0)),
                 std::sqrt(q * std::max(eig.values[1], 0.0))};
  double angle = std::atan2(eig.vectors(1, 0), eig.vectors(0, 0));
  if (angle < 0.0) angle += std::numbers::pi;
  if (angle >= std::numbers::pi) angle -= std::numbers::pi;
  // Isotropic marginals have no preferred axis.
  if (eig.values[0] - eig.values[1] <= 1e-14 * scale) angle = 0.0;
  e.angle = angle;
  e.level = level;
  return e;
}

bool ellipse_contains(const EllipseSpec& e, std::array<double, 2> point) {
  const double dx = point[0] - e.center[0];
  const double dy = point[1] - e.center[1];
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  double r = 0.0;
  for (auto [coord, axis] : {std::pair{u, e.semi_axes[0]}, std::pair{v, e.semi_axes[1]}}) {
    if (axis > 0.0) {
      r += (coord / axis) * (coord / axis);
    } else if (coord != 0.0) {
      return false;
    }
  }
  return r <= 1.0;
}

double mahalanobis_squared(const prob::LatentDistribution& dist, std::span<const double> y) {
  const std::size_t l = dist.dim();
  if (y.size() != l) throw ShapeError("mahalanobis_squared: point/distribution size mismatch");
  Eigen::MatrixXd cov(l, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) cov(i, j) = dist.covariance(i, j);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericError("mahalanobis_squared: covariance is not positive definite");
  }
  Eigen::VectorXd d(l);
  for (std::size_t i = 0; i < l; ++i) d(i) = y[i] - dist.mean[i];
  const Eigen::VectorXd z = llt.matrixL().solve(d);
  return z.squaredNorm();
}

bool ellipsoid_contains(const prob::LatentDistribution& dist, std::span<const double> y,
                        double level) {
  return mahalanobis_squared(dist, y) <= chi2_quantile(dist.dim(), level);
}

void flag_max_uncertainty(std::vector<ReportRow>& rows, std::span<const double> traces) {
  if (traces.size() != rows.size()) {
    throw ShapeError("flag_max_uncertainty: " + std::to_string(traces.size()) + " traces for " +
                     std::to_string(rows.size()) + " rows");
  }
  std::map<std::pair<int, int>, std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].max_uncertainty = false;
    const auto key = std::pair{rows[i].case_id, static_cast<int>(rows[i].kind)};
    auto it = best.find(key);
    if (it == best.end() || traces[i] > traces[it->second]) best[key] = i;
  }
  for (const auto& [key, i] : best) rows[i].max_uncertainty = true;
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "case_id,time_index,kind,lift_mean,lift_2sigma,avg_loglik,max_uncertainty\n";
  for (const auto& r : rows) {
    csv::Row(out) << r.case_id << r.time_index << prob::to_string(r.kind) << r.lift_mean
                  << r.lift_two_sigma << r.avg_loglikelihood << (r.max_uncertainty ? 1 : 0);
  }
}

}  // namespace guq::uq

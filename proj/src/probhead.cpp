#include "guq/probhead.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "guq/error.hpp"

namespace guq::prob {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2π)
constexpr double kMinDiagonal = 1e-150;
}  // namespace

std::size_t dimension_from_triangle(std::size_t n) {
  std::size_t l = 0;
  while (triangle_size(l) < n) ++l;
  if (triangle_size(l) != n || n == 0) {
    throw ShapeError("triangle length " + std::to_string(n) + " is not l(l+1)/2 for any l >= 1");
  }
  return l;
}

CholeskyFactor assemble_cholesky(std::span<const double> raw_tri, std::size_t l) {
  if (raw_tri.size() != triangle_size(l)) {
    throw ShapeError("assemble_cholesky: expected " + std::to_string(triangle_size(l)) +
                     " raw entries for l=" + std::to_string(l) + ", got " +
                     std::to_string(raw_tri.size()));
  }
  CholeskyFactor out;
  out.lower = Matrix(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < i; ++j) out.lower(i, j) = raw_tri[triangle_index(i, j)];
    double d = raw_tri[triangle_index(i, i)];
    if (!std::isfinite(d)) throw NumericError("assemble_cholesky: non-finite raw diagonal");
    if (d > kRawDiagonalLimit || d < -kRawDiagonalLimit) {
      d = std::clamp(d, -kRawDiagonalLimit, kRawDiagonalLimit);
      out.clamped = true;
    }
    out.lower(i, i) = std::exp(0.5 * d);
  }
  return out;
}

Matrix covariance_from_cholesky(const Matrix& lower) {
  Matrix cov = matmul_nt(lower, lower);
  return symmetric_part(cov);
}

GaussianPrediction make_prediction(std::span<const double> mean, std::span<const double> raw_tri) {
  GaussianPrediction p;
  p.mean.assign(mean.begin(), mean.end());
  p.raw_tri.assign(raw_tri.begin(), raw_tri.end());
  auto factor = assemble_cholesky(raw_tri, mean.size());
  p.lower = std::move(factor.lower);
  p.clamped = factor.clamped;
  return p;
}

double nll_loss(std::span<const double> y, std::span<const double> mean, const Matrix& lower) {
  const std::size_t l = mean.size();
  if (y.size() != l || lower.rows() != l || lower.cols() != l) {
    throw ShapeError("nll_loss: y(" + std::to_string(y.size()) + "), mean(" + std::to_string(l) +
                     ") and L" + lower.shape_string() + " do not conform");
  }
  double log_det = 0.0;
  double quad = 0.0;
  std::vector<double> z(l);
  for (std::size_t i = 0; i < l; ++i) {
    const double lii = lower(i, i);
    if (!(lii >= kMinDiagonal)) {
      throw NumericError("nll_loss: Cholesky diagonal entry " + std::to_string(i) +
                         " is below 1e-150 (singular factor)");
    }
    double s = y[i] - mean[i];
    for (std::size_t j = 0; j < i; ++j) s -= lower(i, j) * z[j];
    z[i] = s / lii;
    quad += z[i] * z[i];
    log_det += std::log(lii);
  }
  return 0.5 * static_cast<double>(l) * kLog2Pi + log_det + 0.5 * quad;
}

ad::Var gaussian_nll(ad::Var mean, ad::Var raw_tri, ad::Var target) {
  const std::size_t l = mean.cols();
  if (raw_tri.cols() != triangle_size(l) || target.cols() != l || mean.rows() != target.rows() ||
      raw_tri.rows() != mean.rows()) {
    throw ShapeError("gaussian_nll: mean " + mean.value().shape_string() + ", raw " +
                     raw_tri.value().shape_string() + " and target " +
                     target.value().shape_string() + " do not conform");
  }
  const ad::Var residual = target - mean;
  std::vector<ad::Var> z;
  ad::Var quad{};
  ad::Var half_log_det{};
  for (std::size_t i = 0; i < l; ++i) {
    const ad::Var diag = ad::clamp(ad::slice_cols(raw_tri, triangle_index(i, i), 1),
                                   -kRawDiagonalLimit, kRawDiagonalLimit);
    ad::Var s = ad::slice_cols(residual, i, 1);
    for (std::size_t j = 0; j < i; ++j) {
      s = s - ad::slice_cols(raw_tri, triangle_index(i, j), 1) * z[j];
    }
    z.push_back(s * ad::exp(-0.5 * diag));
    const ad::Var zz = ad::square(z.back());
    quad = i == 0 ? zz : quad + zz;
    half_log_det = i == 0 ? 0.5 * diag : half_log_det + 0.5 * diag;
  }
  const ad::Var per_row = (half_log_det + 0.5 * quad) + 0.5 * static_cast<double>(l) * kLog2Pi;
  return ad::mean(per_row);
}

const char* to_string(UncertaintyKind kind) {
  return kind == UncertaintyKind::aleatoric ? "aleatoric" : "epistemic";
}

Matrix psd_factor(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw ShapeError("psd_factor: non-square " + cov.shape_string());
  if (!cov.all_finite()) throw NumericError("psd_factor: non-finite covariance");
  const auto n = static_cast<Eigen::Index>(cov.rows());
  const Matrix sym = symmetric_part(cov);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> view(
      sym.data(), n, n);
  Eigen::LLT<Eigen::MatrixXd> llt(view);
  Matrix out(cov.rows(), cov.cols());
  if (llt.info() == Eigen::Success) {
    const Eigen::MatrixXd l = llt.matrixL();
    bool positive = true;
    for (Eigen::Index i = 0; i < n; ++i) positive = positive && l(i, i) > 0.0;
    if (positive) {
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) out(i, j) = l(i, j);
      return out;
    }
  }
  const SymmetricEigen eig = symmetric_eigen(sym);
  const double scale = std::max(1.0, std::abs(eig.values.front()));
  if (eig.values.back() < -1e-12 * scale) {
    throw NumericError("psd_factor: covariance is not positive semi-definite (min eigenvalue " +
                       std::to_string(eig.values.back()) + ")");
  }
  for (std::size_t k = 0; k < eig.values.size(); ++k) {
    const double s = std::sqrt(std::max(eig.values[k], 0.0));
    for (std::size_t i = 0; i < cov.rows(); ++i) out(i, k) = eig.vectors(i, k) * s;
  }
  return out;
}

Matrix sample_gaussian(const LatentDistribution& dist, std::size_t n, Rng& rng) {
  const std::size_t l = dist.dim();
  if (dist.covariance.rows() != l || dist.covariance.cols() != l) {
    throw ShapeError("sample_gaussian: covariance " + dist.covariance.shape_string() +
                     " does not match mean length " + std::to_string(l));
  }
  const Matrix factor = psd_factor(dist.covariance);
  Matrix out(n, l);
  std::vector<double> z(l);
  for (std::size_t s = 0; s < n; ++s) {
    for (auto& v : z) v = rng.normal();
    for (std::size_t i = 0; i < l; ++i) {
      double acc = dist.mean[i];
      for (std::size_t k = 0; k < l; ++k) acc += factor(i, k) * z[k];
      out(s, i) = acc;
    }
  }
  return out;
}

}  // namespace guq::prob

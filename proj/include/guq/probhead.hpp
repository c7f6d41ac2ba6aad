#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "guq/autodiff.hpp"
#include "guq/matrix.hpp"
#include "guq/rng.hpp"

namespace guq::prob {

/// Raw diagonal entries are clamped to this range before exponentiation.
inline constexpr double kRawDiagonalLimit = 40.0;

/// Length of a packed lower triangle for dimension l.
constexpr std::size_t triangle_size(std::size_t l) { return l * (l + 1) / 2; }

/// Packed row-major lower-triangle slot of (row, col), col <= row:
/// (0,0) (1,0) (1,1) (2,0) (2,1) (2,2) ...
constexpr std::size_t triangle_index(std::size_t row, std::size_t col) {
  return row * (row + 1) / 2 + col;
}

/// Smallest l with triangle_size(l) == n; throws if n is not triangular.
std::size_t dimension_from_triangle(std::size_t n);

struct CholeskyFactor {
  Matrix lower;          // l×l, strictly positive diagonal
  bool clamped = false;  // a raw diagonal entry hit ±kRawDiagonalLimit
};

/// Builds L from head output: diagonal slots hold log(L_ii²), off-diagonal
/// slots are copied as is.
CholeskyFactor assemble_cholesky(std::span<const double> raw_tri, std::size_t l);

/// Σ = L·Lᵀ.
Matrix covariance_from_cholesky(const Matrix& lower);

/// Mean and Cholesky factor of one head evaluation.
struct GaussianPrediction {
  std::vector<double> mean;
  std::vector<double> raw_tri;
  Matrix lower;
  bool clamped = false;

  Matrix covariance() const { return covariance_from_cholesky(lower); }
};

GaussianPrediction make_prediction(std::span<const double> mean, std::span<const double> raw_tri);

/// −log N(y | μ, L·Lᵀ), via forward substitution.
double nll_loss(std::span<const double> y, std::span<const double> mean, const Matrix& lower);

/// Batch-mean Gaussian NLL on a tape. `mean` is B×l, `raw_tri` is
/// B×l(l+1)/2 in the packed layout, `target` is B×l.
ad::Var gaussian_nll(ad::Var mean, ad::Var raw_tri, ad::Var target);

enum class UncertaintyKind { aleatoric, epistemic };

const char* to_string(UncertaintyKind kind);

struct LatentDistribution {
  std::vector<double> mean;
  Matrix covariance;
  UncertaintyKind kind = UncertaintyKind::aleatoric;

  std::size_t dim() const { return mean.size(); }
};

/// C with C·Cᵀ = cov. Cholesky when cov is positive definite, otherwise a
/// symmetric square root from the eigendecomposition with small negative
/// eigenvalues (down to −1e-12·scale) clipped at zero.
Matrix psd_factor(const Matrix& cov);

/// n draws μ + C·z as rows of an n×l matrix.
Matrix sample_gaussian(const LatentDistribution& dist, std::size_t n, Rng& rng);

}  // namespace guq::prob

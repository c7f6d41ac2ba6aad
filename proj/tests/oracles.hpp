#pragma once

// Reference implementations used only by tests. They share no code with the
// library beyond the Matrix container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "guq/matrix.hpp"

namespace oracle {

using guq::Matrix;

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& gen, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (auto& v : m.values()) v = u(gen);
  return m;
}

inline double norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

inline double relative_error(const Matrix& got, const Matrix& want) {
  Matrix d(got.rows(), got.cols());
  for (std::size_t i = 0; i < got.size(); ++i) d[i] = got[i] - want[i];
  const double denom = std::max(norm(want), 1e-300);
  return norm(d) / denom;
}

/// Central differences of a scalar function, entrywise.
inline Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& at,
                          double h = 1e-5) {
  Matrix g(at.rows(), at.cols());
  Matrix x = at;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian (l×d) of a vector function of a d-vector.
inline Matrix fd_jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                          std::vector<double> x, double h = 1e-5) {
  const std::size_t d = x.size();
  const std::size_t l = f(x).size();
  Matrix j(l, d);
  for (std::size_t c = 0; c < d; ++c) {
    const double x0 = x[c];
    x[c] = x0 + h;
    const auto fp = f(x);
    x[c] = x0 - h;
    const auto fm = f(x);
    x[c] = x0;
    for (std::size_t r = 0; r < l; ++r) j(r, c) = (fp[r] - fm[r]) / (2.0 * h);
  }
  return j;
}

/// Gauss-Jordan with partial pivoting; returns {inverse, determinant}.
inline std::pair<Matrix, double> inverse_and_det(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix m = a;
  Matrix inv = Matrix::identity(n);
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
    if (piv != col) {
      for (std::size_t k = 0; k < n; ++k) {
        std::swap(m(piv, k), m(col, k));
        std::swap(inv(piv, k), inv(col, k));
      }
      det = -det;
    }
    const double p = m(col, col);
    det *= p;
    for (std::size_t k = 0; k < n; ++k) {
      m(col, k) /= p;
      inv(col, k) /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m(r, col);
      for (std::size_t k = 0; k < n; ++k) {
        m(r, k) -= f * m(col, k);
        inv(r, k) -= f * inv(col, k);
      }
    }
  }
  return {inv, det};
}

/// Cholesky factor from the packed head output: diagonal exp(raw/2),
/// off-diagonals copied. Same packing as the library, written out by hand.
inline Matrix lower_from_raw(const std::vector<double>& raw, std::size_t l) {
  Matrix lower(l, l);
  std::size_t k = 0;
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j <= i; ++j, ++k)
      lower(i, j) = (i == j) ? std::exp(0.5 * raw[k]) : raw[k];
  return lower;
}

/// −log N(y | μ, Σ) from the dense formula.
inline double dense_gaussian_nll(const std::vector<double>& y, const std::vector<double>& mu,
                                 const Matrix& sigma) {
  const std::size_t l = y.size();
  auto [inv, det] = inverse_and_det(sigma);
  double q = 0.0;
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) q += (y[i] - mu[i]) * inv(i, j) * (y[j] - mu[j]);
  return 0.5 * (static_cast<double>(l) * std::log(2.0 * std::numbers::pi) + std::log(det) + q);
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
inline std::vector<double> jacobi_eigenvalues(Matrix a, int sweeps = 100) {
  const std::size_t n = a.rows();
  for (int s = 0; s < sweeps; ++s) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// Plain Cholesky of an SPD matrix.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = (i == j) ? std::sqrt(s) : s / l(j, j);
    }
  return l;
}

/// Random SPD matrix B·Bᵀ + shift·I.
inline Matrix random_spd(std::size_t n, std::mt19937_64& gen, double shift = 0.1) {
  const Matrix b = random_matrix(n, n, gen);
  Matrix s = naive_matmul(b, naive_transpose(b));
  for (std::size_t i = 0; i < n; ++i) s(i, i) += shift;
  return s;
}

/// Orthogonal matrix from Gram-Schmidt on random columns.
inline Matrix random_orthogonal(std::size_t n, std::mt19937_64& gen) {
  Matrix q = random_matrix(n, n, gen);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, k);
    }
    double nn = 0.0;
    for (std::size_t i = 0; i < n; ++i) nn += q(i, j) * q(i, j);
    nn = std::sqrt(nn);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= nn;
  }
  return q;
}

/// Textbook unbiased sample covariance of the rows of x.
inline Matrix sample_covariance(const std::vector<std::vector<double>>& x) {
  const std::size_t n = x.size(), d = x.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  for (auto& m : mean) m /= static_cast<double>(n);
  Matrix c(d, d);
  for (const auto& r : x)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) c(i, j) += (r[i] - mean[i]) * (r[j] - mean[j]);
  for (auto& v : c.values()) v /= static_cast<double>(n - 1);
  return c;
}

}  // namespace oracle

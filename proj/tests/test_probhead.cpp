#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "guq/error.hpp"
#include "guq/probhead.hpp"
#include "oracles.hpp"

using namespace guq;
namespace ad = guq::ad;

TEST_CASE("triangle packing") {
  CHECK(prob::triangle_size(3) == 6);
  CHECK(prob::triangle_index(0, 0) == 0);
  CHECK(prob::triangle_index(1, 0) == 1);
  CHECK(prob::triangle_index(2, 2) == 5);
  CHECK(prob::dimension_from_triangle(6) == 3);
  CHECK_THROWS_AS(prob::dimension_from_triangle(5), ShapeError);
}

TEST_CASE("cholesky assembly examples") {
  const auto id = prob::assemble_cholesky(std::vector<double>(6, 0.0), 3);
  CHECK(id.lower == Matrix::identity(3));
  CHECK(prob::covariance_from_cholesky(id.lower) == Matrix::identity(3));

  std::vector<double> raw(6, 0.0);
  raw[prob::triangle_index(0, 0)] = std::log(4.0);
  const auto f = prob::assemble_cholesky(raw, 3);
  CHECK(f.lower(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(f.lower(1, 1) == 1.0);

  std::vector<double> huge(6, 0.0);
  huge[0] = 1000.0;
  CHECK(prob::assemble_cholesky(huge, 3).clamped);
  CHECK(std::isfinite(prob::assemble_cholesky(huge, 3).lower(0, 0)));
}

TEST_CASE("random raw outputs give positive definite covariances") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-5, 5);
  double worst = 1e300;
  for (int rep = 0; rep < 10000; ++rep) {
    std::vector<double> raw(6);
    for (auto& v : raw) v = u(gen);
    const Matrix s = prob::covariance_from_cholesky(prob::assemble_cholesky(raw, 3).lower);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) REQUIRE(s(i, j) == s(j, i));
    worst = std::min(worst, oracle::jacobi_eigenvalues(s).front());
  }
  CHECK(worst > 0.0);
}

TEST_CASE("nll closed forms") {
  const std::vector<double> mu{0.4, -1.0, 2.0};
  CHECK(prob::nll_loss(mu, mu, Matrix::identity(3)) ==
        doctest::Approx(1.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(std::abs(prob::nll_loss(mu, mu, Matrix::identity(3)) - 2.756815599614018) < 1e-9);
  CHECK(prob::nll_loss(std::vector<double>{1.0}, std::vector<double>{0.0}, Matrix{{1.0}}) ==
        doctest::Approx(1.418938533204673).epsilon(1e-14));
}

TEST_CASE("nll matches the dense formula") {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> raw(6), y(3), mu(3);
    for (auto& v : raw) v = u(gen);
    for (auto& v : y) v = u(gen);
    for (auto& v : mu) v = u(gen);
    const Matrix lo = oracle::lower_from_raw(raw, 3);
    const Matrix sigma = oracle::naive_matmul(lo, oracle::naive_transpose(lo));
    const double want = oracle::dense_gaussian_nll(y, mu, sigma);
    const double got = prob::nll_loss(y, mu, prob::assemble_cholesky(raw, 3).lower);
    CHECK(std::abs(got - want) <= 1e-10 * std::abs(want));
  }
}

namespace {

double tape_nll(const Matrix& mean, const Matrix& raw, const Matrix& target) {
  ad::Tape t;
  return prob::gaussian_nll(t.constant(mean), t.constant(raw), t.constant(target)).value()(0, 0);
}

}  // namespace

TEST_CASE("batched tape nll equals the mean of per-row nll") {
  std::mt19937_64 gen(3);
  const Matrix mean = oracle::random_matrix(4, 3, gen);
  const Matrix raw = oracle::random_matrix(4, 6, gen);
  const Matrix target = oracle::random_matrix(4, 3, gen);
  double want = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    const std::vector<double> rr(raw.row(r).begin(), raw.row(r).end());
    const Matrix lo = oracle::lower_from_raw(rr, 3);
    want += oracle::dense_gaussian_nll({target.row(r).begin(), target.row(r).end()},
                                       {mean.row(r).begin(), mean.row(r).end()},
                                       oracle::naive_matmul(lo, oracle::naive_transpose(lo)));
  }
  CHECK(tape_nll(mean, raw, target) == doctest::Approx(want / 4).epsilon(1e-12));
}

TEST_CASE("nll gradients match differences") {
  std::mt19937_64 gen(4);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix mean = oracle::random_matrix(2, 3, gen);
    const Matrix raw = oracle::random_matrix(2, 6, gen);
    const Matrix target = oracle::random_matrix(2, 3, gen);
    const Matrix gm = ad::gradient(
        [&](ad::Var m) {
          return prob::gaussian_nll(m, m.tape->constant(raw), m.tape->constant(target));
        },
        mean);
    const Matrix gr = ad::gradient(
        [&](ad::Var r) {
          return prob::gaussian_nll(r.tape->constant(mean), r, r.tape->constant(target));
        },
        raw);
    const Matrix fm = oracle::fd_gradient([&](const Matrix& m) { return tape_nll(m, raw, target); }, mean);
    const Matrix fr = oracle::fd_gradient([&](const Matrix& r) { return tape_nll(mean, r, target); }, raw);
    CHECK(oracle::relative_error(gm, fm) < 1e-6);
    CHECK(oracle::relative_error(gr, fr) < 1e-6);
  }
}

TEST_CASE("nll is stationary in the mean at the target") {
  std::mt19937_64 gen(5);
  const Matrix raw = oracle::random_matrix(1, 6, gen);
  const Matrix target = oracle::random_matrix(1, 3, gen);
  const Matrix g = ad::gradient(
      [&](ad::Var m) { return prob::gaussian_nll(m, m.tape->constant(raw), m.tape->constant(target)); },
      target);
  CHECK(max_abs(g) < 1e-12);
}

TEST_CASE("sampling examples") {
  Rng rng(7);
  SUBCASE("zero covariance") {
    prob::LatentDistribution d{{1.0, 2.0, 3.0}, Matrix(3, 3), prob::UncertaintyKind::aleatoric};
    const Matrix s = prob::sample_gaussian(d, 10, rng);
    for (std::size_t i = 0; i < 10; ++i) CHECK(std::vector<double>(s.row(i).begin(), s.row(i).end()) == d.mean);
  }
  SUBCASE("identity moments") {
    prob::LatentDistribution d{{0.0, 0.0, 0.0}, Matrix::identity(3), prob::UncertaintyKind::aleatoric};
    const Matrix s = prob::sample_gaussian(d, 100000, rng);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.rows(); ++i) rows.emplace_back(s.row(i).begin(), s.row(i).end());
    const Matrix c = oracle::sample_covariance(rows);
    for (std::size_t j = 0; j < 3; ++j) {
      double m = 0.0;
      for (const auto& r : rows) m += r[j];
      CHECK(std::abs(m / 1e5) < 0.02);
      CHECK(std::abs(c(j, j) - 1.0) < 0.05);
    }
  }
  SUBCASE("correlated pair") {
    prob::LatentDistribution d{{0.0, 0.0}, Matrix{{1.0, 0.9}, {0.9, 1.0}}, prob::UncertaintyKind::aleatoric};
    const Matrix s = prob::sample_gaussian(d, 100000, rng);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.rows(); ++i) rows.emplace_back(s.row(i).begin(), s.row(i).end());
    const Matrix c = oracle::sample_covariance(rows);
    CHECK(std::abs(c(0, 1) / std::sqrt(c(0, 0) * c(1, 1)) - 0.9) < 0.02);
  }
  SUBCASE("rank-deficient covariance is accepted, indefinite is not") {
    prob::LatentDistribution d{{0.0, 0.0}, Matrix{{1.0, 1.0}, {1.0, 1.0}}, prob::UncertaintyKind::epistemic};
    const Matrix s = prob::sample_gaussian(d, 100, rng);
    for (std::size_t i = 0; i < 100; ++i) CHECK(s(i, 0) == doctest::Approx(s(i, 1)).epsilon(1e-9));
    d.covariance = Matrix{{1.0, 0.0}, {0.0, -1.0}};
    CHECK_THROWS_AS(prob::sample_gaussian(d, 1, rng), NumericError);
  }
}

TEST_CASE("sampling recovers mean and covariance") {
  std::mt19937_64 gen(8);
  const Matrix sigma = oracle::random_spd(3, gen, 0.5);
  prob::LatentDistribution d{{1.0, -2.0, 0.5}, sigma, prob::UncertaintyKind::aleatoric};
  Rng rng(9);
  const Matrix s = prob::sample_gaussian(d, 200000, rng);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < s.rows(); ++i) rows.emplace_back(s.row(i).begin(), s.row(i).end());
  CHECK(oracle::relative_error(oracle::sample_covariance(rows), sigma) < 0.02);
}

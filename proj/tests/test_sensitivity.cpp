#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "guq/error.hpp"
#include "guq/sensitivity.hpp"
#include "oracles.hpp"

using namespace guq;
namespace ad = guq::ad;

namespace {

ad::VectorFunction linear_map(const Matrix& a) {
  const Matrix at = oracle::naive_transpose(a);
  return [at](ad::Var x) { return ad::matmul(x, x.tape->constant(at)); };
}

}  // namespace

TEST_CASE("gramian of a linear map is AᵀA for any noise") {
  std::mt19937_64 gen(1);
  const Matrix a = oracle::random_matrix(3, 6, gen);
  const Matrix ata = oracle::naive_matmul(oracle::naive_transpose(a), a);
  const std::vector<double> base(6, 0.3);
  for (std::uint64_t seed : {1u, 2u}) {
    Rng rng(seed);
    const auto g = sens::measurement_gramian(linear_map(a), base, sens::white_noise(6, 6, 0.5), 20, rng);
    CHECK(oracle::relative_error(g.gramian, ata) < 1e-12);
  }
}

TEST_CASE("diagonal gramian example") {
  const Matrix a{{1, 0}, {0, 2}};
  Rng rng(2);
  const auto g = sens::measurement_gramian(linear_map(a), std::vector<double>{1, 1}, sens::no_noise(2), 3, rng);
  CHECK(g.gramian == Matrix{{1, 0}, {0, 4}});
  CHECK(g.eigenvalues[0] == doctest::Approx(4.0));
  CHECK(g.eigenvalues[1] == doctest::Approx(1.0));
  CHECK(std::abs(g.eigenvectors(1, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(g.eigenvectors(0, 0)) == doctest::Approx(0.0));
}

TEST_CASE("eigenvector signs are fixed") {
  const Matrix flipped{{2, -1}, {-1, 2}};
  const auto g = sens::decompose_gramian(flipped);
  for (std::size_t j = 0; j < 2; ++j) {
    const double a = g.eigenvectors(0, j), b = g.eigenvectors(1, j);
    CHECK((std::abs(a) >= std::abs(b) ? a : b) > 0.0);
  }
  const auto h = sens::decompose_gramian(Matrix{{5, 0}, {0, 1}});
  CHECK(h.eigenvectors(0, 0) == doctest::Approx(1.0));
  CHECK(h.eigenvectors(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("constant map has a zero gramian") {
  auto f = [](ad::Var x) { return ad::matmul(x, x.tape->constant(Matrix(4, 3))) + 2.0; };
  Rng rng(3);
  const auto g = sens::measurement_gramian(f, std::vector<double>(4, 1.0), sens::white_noise(4, 4, 1.0), 5, rng);
  CHECK(max_abs(g.gramian) == 0.0);
  for (double v : g.eigenvalues) CHECK(v == 0.0);
}

TEST_CASE("single-sample gramian matches a finite-difference JᵀJ") {
  std::mt19937_64 gen(4);
  const Matrix w1 = oracle::random_matrix(5, 7, gen);
  const Matrix w2 = oracle::random_matrix(7, 3, gen);
  auto f = [&](ad::Var x) {
    auto& t = *x.tape;
    return ad::matmul(ad::tanh(ad::matmul(x, t.constant(w1))), t.constant(w2));
  };
  const std::vector<double> x0{0.1, -0.4, 0.3, 0.8, -0.2};
  Rng rng(4);
  const auto g = sens::measurement_gramian(f, x0, sens::no_noise(5), 1, rng);
  const Matrix j = oracle::fd_jacobian(
      [&](const std::vector<double>& x) {
        ad::Tape t;
        return f(t.constant(Matrix::row_vector(x))).value().to_vector();
      },
      x0);
  const Matrix jtj = oracle::naive_matmul(oracle::naive_transpose(j), j);
  CHECK(oracle::relative_error(g.gramian, jtj) < 1e-5);
}

TEST_CASE("gramian decomposition invariants") {
  std::mt19937_64 gen(5);
  const Matrix w1 = oracle::random_matrix(33, 16, gen);
  const Matrix w2 = oracle::random_matrix(16, 3, gen);
  auto f = [&](ad::Var x) {
    auto& t = *x.tape;
    return ad::matmul(ad::tanh(ad::matmul(x, t.constant(w1))), t.constant(w2));
  };
  Rng rng(5);
  const auto g = sens::measurement_gramian(f, std::vector<double>(33, 0.1),
                                           sens::white_noise(33, 11, 0.01), 30, rng);
  const std::size_t d = 33;
  CHECK(g.eigenvalues.back() >= -1e-10);
  for (std::size_t i = 1; i < d; ++i) CHECK(g.eigenvalues[i - 1] >= g.eigenvalues[i]);
  CHECK(max_abs(subtract(matmul_tn(g.eigenvectors, g.eigenvectors), Matrix::identity(d))) < 1e-10);
  Matrix lam(d, d);
  for (std::size_t i = 0; i < d; ++i) lam(i, i) = g.eigenvalues[i];
  const Matrix recon = oracle::naive_matmul(oracle::naive_matmul(g.eigenvectors, lam),
                                            oracle::naive_transpose(g.eigenvectors));
  CHECK(oracle::relative_error(recon, g.gramian) < 1e-8);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) CHECK(g.gramian(i, j) == g.gramian(j, i));
}

TEST_CASE("rank selection") {
  CHECK(sens::select_rank(std::vector<double>{9, 0.9, 0.09, 0.01}, 0.99) == 2);
  CHECK(sens::select_rank(std::vector<double>{9, 0.9, 0.09, 0.01}, 0.0) == 1);
  CHECK(sens::select_rank(std::vector<double>{3, 2, 1}, 0.0) == 1);
  for (double gamma : {0.0, 0.5, 0.99, 1.0}) CHECK(sens::select_rank(std::vector<double>{2.5}, gamma) == 1);
  CHECK(sens::select_rank(std::vector<double>{1, 1, 1, 1}, 1.0) == 4);
  CHECK(sens::select_rank(std::vector<double>{0, 0}, 0.9) == 0);
  // rounding-level negative tails are tolerated, real negatives are not
  CHECK(sens::select_rank(std::vector<double>{1.0, -1e-20}, 0.99) == 1);
  CHECK_THROWS_AS(sens::select_rank(std::vector<double>{1.0, -0.1}, 0.9), ContractError);
  CHECK_THROWS_AS(sens::select_rank(std::vector<double>{1.0}, 1.5), ContractError);
}

TEST_CASE("structured noise") {
  std::mt19937_64 gen(6);
  const Matrix u = oracle::random_orthogonal(5, gen);
  Matrix c = Matrix(5, 5);
  const std::vector<double> lam{10, 0.001, 0.0005, 0.0001, 0.00001};
  for (std::size_t i = 0; i < 5; ++i) c(i, i) = lam[i];
  const auto g = sens::decompose_gramian(oracle::naive_matmul(oracle::naive_matmul(u, c), oracle::naive_transpose(u)));

  Rng rng(6);
  SUBCASE("zero variance") {
    const auto m = sens::make_noise_model(g, 0.99, 0.0, {});
    for (double v : sens::structured_noise(m, rng)) CHECK(v == 0.0);
  }
  SUBCASE("rank-one covariance") {
    const double var = 2.5e-5;
    const auto m = sens::make_noise_model(g, 0.99, var, {});
    REQUIRE(m.modes.cols() == 1);
    std::vector<std::vector<double>> draws;
    for (int i = 0; i < 100000; ++i) draws.push_back(sens::structured_noise(m, rng));
    const Matrix emp = oracle::sample_covariance(draws);
    Matrix want(5, 5);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) want(i, j) = var * u(i, 0) * u(j, 0);
    CHECK(oracle::relative_error(emp, want) < 0.05);
  }
  SUBCASE("masked entries are exactly zero") {
    std::vector<bool> mask{false, true, false, true, true};
    const auto m = sens::make_noise_model(g, 1.0, 1.0, mask);
    for (int i = 0; i < 100; ++i) {
      const auto eta = sens::structured_noise(m, rng);
      CHECK(eta[1] == 0.0);
      CHECK(eta[3] == 0.0);
      CHECK(eta[4] == 0.0);
    }
  }
}

TEST_CASE("coordinate mask covers the 22 coordinate slots") {
  const auto mask = sens::coordinate_mask();
  REQUIRE(mask.size() == 33);
  std::size_t count = 0;
  for (bool b : mask) count += b;
  CHECK(count == 22);
  for (std::size_t k = 0; k < 11; ++k) {
    CHECK_FALSE(mask[gust::SensorLayout::pressure_slot(k)]);
    CHECK(mask[gust::SensorLayout::x_slot(k)]);
    CHECK(mask[gust::SensorLayout::y_slot(k)]);
  }
}

TEST_CASE("sensor importance examples") {
  const auto& layout = gust::default_sensor_layout();
  Matrix u = Matrix::identity(33);
  const auto one = sens::sensor_importance(u, 4, layout);
  for (std::size_t k = 0; k < 11; ++k) CHECK(one[k] == (k == 4 ? 1.0 : 0.0));

  Matrix eq(33, 1);
  for (std::size_t k = 0; k < 11; ++k) eq(k, 0) = -0.3;
  const auto bars = sens::sensor_importance(eq, 0, layout);
  for (double b : bars) CHECK(b == 0.3);

  CHECK_THROWS_AS(sens::sensor_importance(eq, 1, layout), ContractError);
}

TEST_CASE("energy share and cosine") {
  const std::vector<double> ev{3, 1};
  CHECK(sens::energy_share(ev, 0) == 0.75);
  CHECK(sens::cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(sens::cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{2, 4}) ==
        doctest::Approx(1.0));
}

TEST_CASE("importance csv layout") {
  sens::ImportanceRow r;
  r.time_index = 3;
  r.mode = 0;
  r.share = 0.5;
  r.weights.fill(0.25);
  std::ostringstream out;
  sens::write_importance_csv(out, {r});
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header == "time_index,mode,share,s1,s2,s3,s4,s5,s6,s7,s8,s9,s10,s11");
  CHECK(line == "3,0,0.5,0.25,0.25,0.25,0.25,0.25,0.25,0.25,0.25,0.25,0.25,0.25");
}

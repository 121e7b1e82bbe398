#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bmt/likelihood.hpp"
#include "bmt/simulate.hpp"
#include "helpers.hpp"

using namespace bmt;

TEST_CASE("log_likelihood matches the univariate closed form") {
  Matrix K(1, 1);
  K << 0.25;  // variance 4
  Vector x(1);
  x << 3;
  CHECK(log_likelihood(K, x) == doctest::Approx(0.5 * std::log(0.25) - 0.5 * 9 * 0.25).epsilon(1e-14));
  Matrix neg(1, 1);
  neg << -1;
  CHECK_THROWS_AS(log_likelihood(neg, x), NotPositiveDefinite);
}

TEST_CASE("is_ddm") {
  bmt::Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const int d = 2 + static_cast<int>(rng.next_u64() % 5);
    CHECK(is_ddm(testutil::random_ddm(d, rng)));
  }
  Matrix bad(2, 2);
  bad << 1, 0.5, 0.5, 1;  // positive off-diagonal
  CHECK(is_ddm(bad) == false);
  Matrix neg_row(2, 2);
  neg_row << 1, -2, -2, 1;  // negative row sums and indefinite
  CHECK(is_ddm(neg_row) == false);
}

TEST_CASE("fiedler transform formulas and round trip") {
  Matrix K(2, 2);
  K << 3, -1, -1, 2;
  const Matrix P = fiedler(K);
  CHECK(P(0, 1) == 2);   // column sums
  CHECK(P(0, 2) == 1);
  CHECK(P(1, 2) == 1);   // negated off-diagonal
  CHECK(P(1, 1) == 0);
  CHECK((P - P.transpose()).cwiseAbs().maxCoeff() == 0);
  CHECK((fiedler_inverse(P) - K).cwiseAbs().maxCoeff() == 0);

  bmt::Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const Matrix K2 = testutil::random_ddm(2 + t % 5, rng);
    CHECK((fiedler_inverse(fiedler(K2)) - K2).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("laplacian embed and restrict round trips") {
  bmt::Rng rng(13);
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + t % 5;
    const Matrix K = testutil::random_ddm(d, rng);
    const Matrix L = laplacian_embed(K);
    for (int i = 0; i < L.rows(); ++i)
      CHECK(std::abs(L.row(i).sum()) <= 1e-12 * L.cwiseAbs().maxCoeff());
    CHECK((laplacian_restrict(L) - K).cwiseAbs().maxCoeff() == 0);

    const Matrix L2 = testutil::random_dyadic_laplacian(d + 1, rng);
    const Matrix K2 = laplacian_restrict(L2);
    CHECK((laplacian_embed(K2) - L2).cwiseAbs().maxCoeff() == 0);
  }
  Matrix not_ddm(2, 2);
  not_ddm << 1, 0.5, 0.5, 1;
  CHECK_THROWS_AS(laplacian_embed(not_ddm), NotDdm);
  Matrix not_lap(2, 2);
  not_lap << 1, 0, 0, 1;
  CHECK_THROWS_AS(laplacian_restrict(not_lap), NotLaplacian);
}

TEST_CASE("squared_distance") {
  Vector x(2);
  x << 3, -1;
  const Matrix D = squared_distance(x);
  CHECK(D(0, 1) == 9);
  CHECK(D(0, 2) == 1);
  CHECK(D(1, 2) == 16);
  CHECK(D.diagonal().cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("matrix-tree log-determinant identity") {
  bmt::Rng rng(14);
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + t % 4;  // d+1 <= 6 nodes
    // Random positive weights on the complete graph guarantee connectivity.
    Matrix P = Matrix::Zero(d + 1, d + 1);
    for (int i = 0; i <= d; ++i)
      for (int j = i + 1; j <= d; ++j) {
        P(i, j) = rng.next_double() + 0.05;
        P(j, i) = P(i, j);
      }
    const Matrix K = fiedler_inverse(P);
    const double dense = std::log(K.determinant());
    const double mt = logdet_via_matrix_tree(P);
    CHECK(std::abs(mt - dense) <= 1e-9 * std::max(1.0, std::abs(dense)));
  }
  CHECK_THROWS_AS(logdet_via_matrix_tree(Matrix::Ones(9, 9) - Matrix::Identity(9, 9)), TooLarge);
  CHECK_THROWS_AS(logdet_via_matrix_tree(Matrix::Zero(3, 3)), ZeroTotal);
  // Disconnected support: spanning-tree sum is empty.
  Matrix disc = Matrix::Zero(4, 4);
  disc(0, 1) = disc(1, 0) = 1;
  disc(2, 3) = disc(3, 2) = 1;
  CHECK_THROWS_AS(logdet_via_matrix_tree(disc), ZeroTotal);
}

TEST_CASE("second directional derivative matches finite differences") {
  bmt::Rng rng(15);
  for (int t = 0; t < 30; ++t) {
    const int d = 2 + t % 5;
    TreeWithParams truth = random_ultrametric_tree(d, rng);
    const Matrix sigma = build_covariance(truth.tree, truth.theta) +
                         0.05 * Matrix::Identity(d, d);
    const Vector x = testutil::random_gaussian(d, rng);
    Vector coeff = Vector::Zero(d + 1);
    for (int i = 0; i <= d; ++i) coeff(i) = rng.next_normal();
    const DirectionMatrix dir = direction_from_coeff(coeff);

    auto f = [&](double s) {
      const Matrix m = sigma + s * dir.A;
      Eigen::LLT<Matrix> llt(m);
      REQUIRE(llt.info() == Eigen::Success);
      double logdet = 0;
      for (int i = 0; i < d; ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
      return -0.5 * logdet - 0.5 * x.dot(llt.solve(x));
    };
    // Richardson-extrapolated central difference: cancels the O(h^2) term.
    // The step scales with the direction norm so s * A stays a small perturbation.
    const double h = 1e-3 / std::max(1.0, dir.A.cwiseAbs().maxCoeff());
    auto fd_at = [&](double s) { return (f(s) - 2 * f(0) + f(-s)) / (s * s); };
    const double fd = (4 * fd_at(h / 2) - fd_at(h)) / 3;
    const double exact = second_directional_derivative(sigma, dir.A, x);
    CHECK(std::abs(fd - exact) <= 1e-5 * std::max(1.0, std::abs(exact)));
  }
}

TEST_CASE("negative curvature direction") {
  bmt::Rng rng(16);
  int generic_seen = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + t % 5;
    TreeWithParams truth = random_ultrametric_tree(d, rng);
    const Matrix sigma = build_covariance(truth.tree, truth.theta) +
                         0.05 * Matrix::Identity(d, d);
    Eigen::LLT<Matrix> llt(sigma);
    Vector x;
    do {
      x = sample_bmtm(truth.tree, truth.theta, rng);
    } while (x.dot(llt.solve(x)) <= 0.5);
    const Matrix M = 2 * x * x.transpose() - sigma;
    const Matrix B0 = llt.solve(M);                       // S^-1 M
    const Matrix B = llt.solve(B0.transpose()).transpose();  // S^-1 M S^-1
    const DirectionMatrix dir = negative_curvature_direction(0.5 * (B + B.transpose()));
    if (!dir.fallback && dir.coeff(0) != 0) ++generic_seen;
    // A B A must be negative semidefinite with a strictly negative eigenvalue,
    // which makes the second derivative strictly positive.
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    CHECK(second_directional_derivative(sigma, dir.A, x) > 1e-10 * scale);
  }
  CHECK(generic_seen > 0);

  // Wrong spectrum: the identity has no negative eigenvalues.
  CHECK_THROWS_AS(negative_curvature_direction(Matrix::Identity(3, 3)), SpectrumViolation);
}

TEST_CASE("direction_from_coeff layout") {
  Vector coeff(4);
  coeff << 2, -1, 0, 5;
  const DirectionMatrix dir = direction_from_coeff(coeff);
  CHECK(dir.A(0, 0) == 1);   // 2 - 1
  CHECK(dir.A(0, 1) == 2);
  CHECK(dir.A(2, 2) == 7);   // 2 + 5
  CHECK((dir.A - dir.A.transpose()).cwiseAbs().maxCoeff() == 0);
}

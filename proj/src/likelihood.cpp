#include "bmt/likelihood.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>
#include <vector>

namespace bmt {

namespace {

constexpr double kSymTol = 1e-12;

void require_symmetric(const Matrix &M, const char *who) {
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > kSymTol * scale)
    throw InvalidTree(std::string(who) + ": matrix is not symmetric");
}

}  // namespace

double log_likelihood(const Matrix &K, const Vector &x) {
  require_symmetric(K, "log_likelihood");
  Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("log_likelihood: K is not positive definite");
  double logdet = 0;
  for (int i = 0; i < K.rows(); ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
  return 0.5 * logdet - 0.5 * x.dot(K * x);
}

bool is_ddm(const Matrix &K) {
  if ((K - K.transpose()).cwiseAbs().maxCoeff() >
      kSymTol * std::max(1.0, K.cwiseAbs().maxCoeff()))
    return false;
  const int d = static_cast<int>(K.rows());
  for (int i = 0; i < d; ++i) {
    double row_sum = 0;
    for (int j = 0; j < d; ++j) {
      if (i != j && K(i, j) > 1e-12) return false;
      row_sum += K(i, j);
    }
    if (row_sum < -1e-12) return false;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(K, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  return es.eigenvalues().minCoeff() > 1e-12 * std::max(lmax, 0.0);
}

Matrix fiedler(const Matrix &K) {
  require_symmetric(K, "fiedler");
  const int d = static_cast<int>(K.rows());
  Matrix P = Matrix::Zero(d + 1, d + 1);
  for (int j = 1; j <= d; ++j) {
    P(0, j) = K.col(j - 1).sum();
    P(j, 0) = P(0, j);
  }
  for (int i = 1; i <= d; ++i)
    for (int j = i + 1; j <= d; ++j) {
      P(i, j) = -K(i - 1, j - 1);
      P(j, i) = P(i, j);
    }
  return P;
}

Matrix fiedler_inverse(const Matrix &P) {
  require_symmetric(P, "fiedler_inverse");
  const int d = static_cast<int>(P.rows()) - 1;
  Matrix K = Matrix::Zero(d, d);
  for (int i = 1; i <= d; ++i) {
    K(i - 1, i - 1) = P.row(i).sum();
    for (int j = i + 1; j <= d; ++j) {
      K(i - 1, j - 1) = -P(i, j);
      K(j - 1, i - 1) = -P(i, j);
    }
  }
  return K;
}

Matrix laplacian_embed(const Matrix &K) {
  if (!is_ddm(K)) throw NotDdm("laplacian_embed: K is not a DDM");
  const int d = static_cast<int>(K.rows());
  Matrix L = Matrix::Zero(d + 1, d + 1);
  L.bottomRightCorner(d, d) = K;
  for (int i = 1; i <= d; ++i) {
    L(i, 0) = -K.row(i - 1).sum();
    L(0, i) = L(i, 0);
  }
  L(0, 0) = K.sum();
  return L;
}

Matrix laplacian_restrict(const Matrix &L) {
  require_symmetric(L, "laplacian_restrict");
  const int n = static_cast<int>(L.rows());
  const double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (i != j && L(i, j) > 1e-10 * scale)
        throw NotLaplacian("laplacian_restrict: positive off-diagonal entry");
    if (std::abs(L.row(i).sum()) > 1e-10 * scale)
      throw NotLaplacian("laplacian_restrict: row sums are not zero");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(L, Eigen::EigenvaluesOnly);
  int rank = 0;
  for (int i = 0; i < n; ++i)
    if (es.eigenvalues()(i) > 1e-9 * scale) ++rank;
  if (rank != n - 1) throw NotLaplacian("laplacian_restrict: rank is not d");
  return L.bottomRightCorner(n - 1, n - 1);
}

Matrix squared_distance(const Vector &x) {
  const Vector xa = augment_data(x);
  const int n = static_cast<int>(xa.size());
  Matrix D = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      D(i, j) = (xa(i) - xa(j)) * (xa(i) - xa(j));
      D(j, i) = D(i, j);
    }
  return D;
}

namespace {

// Decodes a Pruefer sequence over n nodes into the n-1 tree edges.
void prufer_decode(const std::vector<int> &seq, int n, std::vector<std::pair<int, int>> &edges) {
  edges.clear();
  std::vector<int> degree(n, 1);
  for (int v : seq) ++degree[v];
  int ptr = 0;
  while (degree[ptr] != 1) ++ptr;
  int leaf = ptr;
  for (int v : seq) {
    edges.push_back({leaf, v});
    if (--degree[v] == 1 && v < ptr) {
      leaf = v;
    } else {
      ++ptr;
      while (degree[ptr] != 1) ++ptr;
      leaf = ptr;
    }
  }
  edges.push_back({leaf, n - 1});
}

}  // namespace

double logdet_via_matrix_tree(const Matrix &P) {
  require_symmetric(P, "logdet_via_matrix_tree");
  const int n = static_cast<int>(P.rows());
  if (n > 8) throw TooLarge("logdet_via_matrix_tree: d+1 > 8");
  if (P.minCoeff() < 0)
    throw InvalidTree("logdet_via_matrix_tree: negative weight");
  if (n == 1) return 0.0;

  // Scale weights to tame the product magnitude; the scaling factor is undone
  // in log space at the end.
  const double w = P.maxCoeff();
  if (w <= 0) throw ZeroTotal("logdet_via_matrix_tree: all weights zero");
  const Matrix Q = P / w;

  double total = 0;
  std::vector<int> seq(std::max(n - 2, 0), 0);
  std::vector<std::pair<int, int>> edges;
  while (true) {
    prufer_decode(seq, n, edges);
    double prod = 1;
    for (auto &[u, v] : edges) prod *= Q(u, v);
    total += prod;
    int k = static_cast<int>(seq.size()) - 1;
    while (k >= 0 && seq[k] == n - 1) seq[k--] = 0;
    if (k < 0) break;
    ++seq[k];
  }
  if (total <= 0) throw ZeroTotal("logdet_via_matrix_tree: no spanning tree has positive weight");
  return std::log(total) + (n - 1) * std::log(w);
}

double second_directional_derivative(const Matrix &sigma, const Matrix &A, const Vector &x) {
  require_symmetric(sigma, "second_directional_derivative");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("second_directional_derivative: Sigma not positive definite");
  const Matrix MA = llt.solve(A);                     // Sigma^{-1} A
  const Matrix B = 2 * x * x.transpose() - sigma;     // 2xx' - Sigma
  // d2/ds2 [ -log det(S + sA)/2 - x'(S + sA)^{-1}x/2 ] at s = 0 equals
  // -tr(S^{-1} A S^{-1} B S^{-1} A) / 2 with B = 2xx' - S.
  return -0.5 * (MA * llt.solve(B) * MA).trace();
}

DirectionMatrix direction_from_coeff(const Vector &coeff) {
  const int d = static_cast<int>(coeff.size()) - 1;
  DirectionMatrix out;
  out.coeff = coeff;
  out.A = coeff(0) * Matrix::Ones(d, d);
  for (int i = 0; i < d; ++i) out.A(i, i) += coeff(i + 1);
  return out;
}

DirectionMatrix negative_curvature_direction(const Matrix &B) {
  require_symmetric(B, "negative_curvature_direction");
  const int d = static_cast<int>(B.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(B);
  const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
  int n_neg = 0;
  for (int i = 0; i < d; ++i)
    if (es.eigenvalues()(i) < -1e-10 * std::max(scale, 1.0)) ++n_neg;
  if (n_neg != d - 1)
    throw SpectrumViolation("negative_curvature_direction: expected exactly d-1 negative eigenvalues, found " +
                            std::to_string(n_neg));

  // Eigenvalues are ascending; the first d-1 columns span U.
  const Matrix U = es.eigenvectors().leftCols(d - 1);

  // Candidate vectors e_0 = all-ones, e_1..e_d canonical.
  auto candidate = [&](int i) {
    Vector v = (i == 0) ? Vector::Ones(d).eval() : Vector::Unit(d, i - 1).eval();
    return v.normalized().eval();
  };
  double best_resid = 2;
  int best_i = -1;
  for (int i = 0; i <= d; ++i) {
    const Vector v = candidate(i);
    const double resid = (v - U * (U.transpose() * v)).norm();
    if (resid < best_resid) {
      best_resid = resid;
      best_i = i;
    }
  }
  auto case1 = [&](int i, bool fallback) {
    Vector coeff = Vector::Zero(d + 1);
    coeff(i) = 1;
    DirectionMatrix out = direction_from_coeff(coeff);
    out.fallback = fallback;
    return out;
  };
  if (best_resid < 1e-9) return case1(best_i, false);

  // Generic case: C = [u_1 .. u_{d-1}, 1]; the last row of C^{-1} fixes the
  // leaf coefficients.
  Matrix C(d, d);
  C.leftCols(d - 1) = U;
  C.col(d - 1) = Vector::Ones(d);
  Eigen::FullPivLU<Matrix> lu(C);
  if (!lu.isInvertible()) return case1(best_i, true);
  const Matrix Cinv = lu.inverse();
  const Vector last_row = Cinv.row(d - 1);
  Vector coeff = Vector::Zero(d + 1);
  coeff(0) = 1;
  for (int i = 0; i < d; ++i) {
    if (std::abs(last_row(i)) < 1e-12) return case1(best_i, true);
    const double ci = 1.0 / last_row(i);
    if (std::abs(ci) > 1e12) return case1(best_i, true);
    coeff(i + 1) = -ci;  // A = 11' - diag(c)
  }
  return direction_from_coeff(coeff);
}

}  // namespace bmt

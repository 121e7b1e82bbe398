#pragma once

#include <Eigen/Dense>

#include "bmt/tree.hpp"

namespace bmt {

// One-sample Gaussian log-likelihood, up to the constant -(d/2) log 2pi:
//   0.5 * logdet(K) - 0.5 * x' K x.
double log_likelihood(const Matrix &K, const Vector &x);

// Diagonally dominant M-matrix test: positive definite, nonpositive
// off-diagonal, nonnegative row sums.
bool is_ddm(const Matrix &K);

// Linear reparametrization of a d x d matrix into a hollow symmetric
// (d+1) x (d+1) edge-weight matrix, and its inverse.
Matrix fiedler(const Matrix &K);
Matrix fiedler_inverse(const Matrix &P);

// Bijection between DDMs and connected-graph Laplacians: embed borders K with
// its negated row/column sums; restrict deletes row/column 0.
Matrix laplacian_embed(const Matrix &K);
Matrix laplacian_restrict(const Matrix &L);

// (d+1) x (d+1) matrix of pairwise squared differences with x_0 = 0.
Matrix squared_distance(const Vector &x);

// log of the weighted spanning-tree sum of the complete graph on d+1 nodes
// with weights P; equals logdet(fiedler_inverse(P)) when that is positive
// definite. Exhaustive enumeration, d+1 <= 8.
double logdet_via_matrix_tree(const Matrix &P);

// Direction in covariance space of the admissible form
//   A = coeff(0) * 11' + sum_i coeff(i) e_i e_i'.
struct DirectionMatrix {
  Vector coeff;  // size d+1; coeff(0) multiplies 11'
  Matrix A;      // the realized d x d matrix
  bool fallback = false;  // near-singular generic case, reported
};

// Second directional derivative of f_x(Sigma) = loglik(Sigma^{-1}) at Sigma in
// direction A: -tr(S^{-1/2} A S^{-1} (2xx' - S) S^{-1} A S^{-1/2}).
double second_directional_derivative(const Matrix &sigma, const Matrix &A, const Vector &x);

// Given symmetric B with exactly d-1 strictly negative eigenvalues, constructs
// an admissible direction A with A B A negative semidefinite and at least one
// strictly negative eigenvalue.
DirectionMatrix negative_curvature_direction(const Matrix &B);

DirectionMatrix direction_from_coeff(const Vector &coeff);

}  // namespace bmt

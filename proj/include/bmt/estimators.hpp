#pragma once

#include <optional>

#include "bmt/tree.hpp"

namespace bmt {

struct EstimatorOutput {
  Matrix covariance;
  std::optional<TreeWithParams> tree;
  bool clamped = false;  // mxshrink only: a nonpositive divisor was raised to 1
};

// Agglomerative ultrametric tree under the average absolute-difference
// distance; merge at distance delta places the parent at height delta / 2.
EstimatorOutput upgma(const Vector &x);

// Greedy pair joining under the criterion
//   (N - 2) m(X1, X2) - sum_k m(X1, Xk) - sum_k m(X2, Xk),
// with m the minimum squared difference between cluster members. Branch
// lengths by the standard two-point split, clamped at zero; the last joined
// node hangs off the root with variance zero.
EstimatorOutput neighbor_joining(const Vector &x);

// Nonnegative least squares of theta against the target x x' under the linear
// map theta -> Sigma_theta, by projected gradient.
EstimatorOutput least_squares(const RootedTree &tree, const Vector &x);

EdgeParams one_third_shrink(const EdgeParams &theta);

// Eigenvalue shrinkage: with eigenvalues in decreasing order, divides the i-th
// (1-based) by 1 + d - 2i. The literal divisor is nonpositive for i above
// (d+1)/2; by default it is clamped to 1 and the output flagged.
EstimatorOutput mxshrink(const Matrix &covariance, bool clamp = true);

// Convex combination delta1 * I + delta2 * Sigma_hat with
//   mu = tr(Sigma_star)/d, alpha^2 = |Sigma_star - mu I|_F^2,
//   delta1 = beta^2 mu / (alpha^2 + beta^2), delta2 = alpha^2 / (alpha^2 + beta^2).
EstimatorOutput linear_shrink(const Matrix &sigma_hat, const Matrix &sigma_star, double beta_sq);

}  // namespace bmt

#pragma once

#include "bmt/likelihood.hpp"
#include "bmt/tree.hpp"

namespace bmt {

struct MleResult {
  SparsityStructure sparsity;
  EdgeParams theta;
  double objective = 0;      // product of |x_i - x_j| over surviving edges
  double objective_log = 0;  // computed in log space; objective = exp(objective_log)
  double loglik = 0;         // -d/2 - objective_log
  long long tie_count = 1;
};

// Product of |x_i - x_j| over the contracted edges, with determined values
// taken from the augmented data vector (x_0 = 0).
double objective(const RootedTree &tree, const SparsityStructure &sparsity, const Vector &x);

// Exact one-sample MLE over the fully-observed sparsity structures of a fixed
// tree, by bottom-up dynamic programming over (node, value) states in O(d^3).
MleResult mle(const RootedTree &tree, const Vector &x);

// Exhaustive reference: minimizes objective over enumerate_fully_observed.
MleResult brute_force_mle(const RootedTree &tree, const Vector &x);

// Dense-matrix log-likelihood of a result, checked against the closed form
// -d/2 - sum log|x_i - x_j|.
double loglik_of_result(const RootedTree &tree, const MleResult &result, const Vector &x);

}  // namespace bmt

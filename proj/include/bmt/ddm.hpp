#pragma once

#include "bmt/likelihood.hpp"
#include "bmt/tree.hpp"

namespace bmt {

// Path graph serially connecting the augmented data values (x_0 = 0 included)
// in increasing order. `order[k]` is the augmented index at position k.
struct SortedPathTree {
  std::vector<int> order;  // size d+1

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> e;
    for (std::size_t k = 1; k < order.size(); ++k) e.push_back({order[k - 1], order[k]});
    return e;
  }
};

SortedPathTree sorted_path_tree(const Vector &x);

struct DdmMleResult {
  Matrix P;  // hollow (d+1) x (d+1), supported on the sorted path
  Matrix K;  // inverse Fiedler transform of P; the DDM MLE precision matrix
};

// Closed-form one-sample MLE over diagonally dominant M-matrices.
DdmMleResult ddm_mle(const Vector &x);

// KKT certificate for the edge-weight program maximized by ddm_mle.
struct KktReport {
  struct Pair {
    int k, l;
    double weight;     // P_kl
    double gradient;   // d l~ / d P_kl
    double slack;      // gradient * weight
  };
  std::vector<Pair> pairs;
  bool nonneg = false;       // condition one
  double max_gradient = 0;   // condition two requires <= tolerance
  double max_slack = 0;      // condition three requires |.| <= tolerance
  bool pass = false;
};

KktReport verify_kkt(const Matrix &P, const Vector &x, double tol = 1e-9);

// The DDM MLE realized as a Brownian motion tree: the sorted path rooted at 0
// with a zero-variance pendant leaf at each interior data node.
TreeWithParams ddm_mle_tree(const Vector &x);

}  // namespace bmt

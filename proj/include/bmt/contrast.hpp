#pragma once

#include "bmt/mle.hpp"
#include "bmt/tree.hpp"

namespace bmt {

struct ContrastResult {
  Vector transformed_data;  // y with y_j = x_(old leaf) - x_1, indexed by new leaves
  RerootedTree rerooted;    // tree rerooted at leaf 1
  MleResult mle;            // exact MLE on the rerooted tree and y
};

// MLE of the contrast model: differences against leaf 1 follow the Brownian
// motion tree model on the tree rerooted at that leaf.
ContrastResult contrast_mle(const RootedTree &tree, const Vector &x);

// Likelihood divergence of the positive latent Gaussian tree model on a star:
// with two equal data values, pinning one duplicate's edge at zero and letting
// the other's variance shrink grows the log-likelihood without bound, by
// half the log of the variance ratio per step.
std::vector<std::pair<double, double>> plgtm_divergence_witness(
    const Vector &x, const std::vector<double> &epsilons);

}  // namespace bmt

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bmt/errors.hpp"

namespace bmt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Rooted tree with node 0 as the degree-1 root and leaves labeled 1..d.
// Latent (internal, non-root) nodes carry labels d+1 and up. Immutable after
// construction; all transforms return new values.
struct RootedTree {
  std::vector<int> parent;                 // parent[0] == -1
  std::vector<std::vector<int>> children;  // derived from parent
  int n_leaves = 0;                        // leaves are nodes 1..n_leaves

  int size() const { return static_cast<int>(parent.size()); }
  bool is_leaf(int i) const { return i >= 1 && i <= n_leaves; }
  bool is_root(int i) const { return i == 0; }
  // Determined nodes are the root and the leaves.
  bool is_determined(int i) const { return i <= n_leaves; }
};

// Nonnegative per-edge variances, indexed by the child node of each edge.
// theta(0) is unused and held at zero.
using EdgeParams = Vector;

// Set of non-root nodes whose parent edge carries variance zero.
struct SparsityStructure {
  std::set<int> zeroed;

  bool operator==(const SparsityStructure &o) const { return zeroed == o.zeroed; }
  bool operator<(const SparsityStructure &o) const { return zeroed < o.zeroed; }
};

// Result of contracting the zero-variance edges: a graph over component
// representatives with a back-map from surviving edges to original edges.
struct ContractedTree {
  struct Edge {
    int a, b;        // component representatives (a = rep of the parent side)
    int orig_child;  // the original edge is (parent(orig_child), orig_child)
  };
  std::vector<int> rep;  // original node -> component representative
  std::vector<Edge> edges;
};

// Rerooting result. `merged` lists, per new non-root node, the original
// child-node ids of the edges fused into that node's parent edge, so edge
// parameters map by summation.
struct RerootedTree {
  RootedTree tree;
  std::vector<std::vector<int>> merged;  // indexed by new node id
  std::vector<int> new_leaf_to_old;      // new leaf id -> original leaf id
};

RootedTree make_tree(std::vector<int> parent, int n_leaves);

void validate(const RootedTree &tree);

std::vector<int> descendant_leaves(const RootedTree &tree, int node);

// Sigma_theta = sum_i theta_i * indicator(de(i)) indicator(de(i))^T.
Matrix build_covariance(const RootedTree &tree, const EdgeParams &theta);

ContractedTree contract_set(const RootedTree &tree, const SparsityStructure &sparsity);

bool is_fully_observed(const RootedTree &tree, const SparsityStructure &sparsity);

// All sparsity structures whose zeroing yields a fully-observed tree.
std::vector<SparsityStructure> enumerate_fully_observed(const RootedTree &tree,
                                                        int leaf_cap = 10);

RerootedTree reroot_at_leaf(const RootedTree &tree, int leaf);

// Maps edge params through a rerooting: theta'(new edge) = sum of theta over
// the merged original edges.
EdgeParams map_params_through_reroot(const RerootedTree &rr, const EdgeParams &theta);

struct TreeWithParams {
  RootedTree tree;
  EdgeParams theta;
};

TreeWithParams parse_newick(const std::string &text);
std::string to_newick(const RootedTree &tree, const EdgeParams &theta);

TreeWithParams tree_from_json(const std::string &text);
std::string tree_to_json(const RootedTree &tree, const EdgeParams &theta);

// Augments a leaf-indexed data vector with the root value x_0 = 0, so entry i
// matches node label i for determined nodes.
Vector augment_data(const Vector &x);

// Throws DuplicateValue / ZeroValue unless all entries of x are distinct,
// nonzero, and distinct from zero (the root value).
void require_distinct_nonzero(const Vector &x);

}  // namespace bmt

#pragma once

// Shared instance generators for the test suites.

#include <map>
#include <vector>

#include "bmt/simulate.hpp"
#include "bmt/tree.hpp"

namespace testutil {

inline bmt::Vector random_gaussian(int d, bmt::Rng &rng) {
  bmt::Vector x(d);
  for (int i = 0; i < d; ++i) x(i) = rng.next_normal();
  return x;
}

// Uniform binary merge topology with internal edges randomly contracted, so
// suites cover both binary and multifurcating trees.
inline bmt::RootedTree random_topology(int d, bmt::Rng &rng) {
  if (d == 1) return bmt::make_tree({-1, 0}, 1);
  bmt::Rng r2(rng.next_u64());
  bmt::TreeWithParams t = bmt::random_ultrametric_tree(d, r2);
  if (d <= 2) return t.tree;
  std::vector<int> par = t.tree.parent;
  std::vector<int> remap(par.size());
  for (std::size_t i = 0; i < par.size(); ++i) remap[i] = static_cast<int>(i);
  for (std::size_t i = d + 1; i < par.size(); ++i)
    if (par[i] > d && rng.next_double() < 1.0 / 3.0) remap[i] = par[i];
  auto find = [&](int v) {
    while (remap[v] != v) v = remap[v];
    return v;
  };
  std::map<int, int> new_id;
  std::vector<int> new_parent;
  for (int i = 0; i <= d; ++i) {
    new_id[i] = i;
    new_parent.push_back(par[i] < 0 ? -1 : -2);
  }
  for (std::size_t i = d + 1; i < par.size(); ++i)
    if (find(static_cast<int>(i)) == static_cast<int>(i)) {
      new_id[static_cast<int>(i)] = static_cast<int>(new_parent.size());
      new_parent.push_back(-2);
    }
  for (std::size_t i = 1; i < par.size(); ++i) {
    const int v = static_cast<int>(i);
    if (find(v) != v) continue;
    new_parent[new_id[v]] = new_id[find(par[v])];
  }
  return bmt::make_tree(new_parent, d);
}

// Random DDM: nonpositive off-diagonal with diagonally dominant rows.
inline bmt::Matrix random_ddm(int d, bmt::Rng &rng) {
  bmt::Matrix K = bmt::Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      K(i, j) = -rng.next_double();
      K(j, i) = K(i, j);
    }
  for (int i = 0; i < d; ++i) {
    double off = 0;
    for (int j = 0; j < d; ++j)
      if (j != i) off += -K(i, j);
    K(i, i) = off + rng.next_double() + 0.1;
  }
  return K;
}

// Connected-graph Laplacian with dyadic rational weights, so border sums are
// exact in double arithmetic and embed/restrict round trips bitwise.
inline bmt::Matrix random_dyadic_laplacian(int n, bmt::Rng &rng) {
  bmt::Matrix W = bmt::Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double w = static_cast<double>(1 + rng.next_u64() % 64) / 16.0;
      // Keep the graph connected via the path 0-1-..-n-1; other edges are
      // present with probability 1/2.
      if (j == i + 1 || rng.next_u64() % 2 == 0) {
        W(i, j) = w;
        W(j, i) = w;
      }
    }
  bmt::Matrix L = -W;
  for (int i = 0; i < n; ++i) L(i, i) = W.row(i).sum();
  return L;
}

// Balanced binary tree over d leaves (leaf blocks split as evenly as possible).
inline bmt::RootedTree balanced_binary_tree(int d) {
  std::vector<int> parent(d + 1, -2);
  parent[0] = -1;
  int next_id = d + 1;
  // Returns the node covering leaves [lo, hi]; allocates internals on demand.
  struct Builder {
    std::vector<int> &parent;
    int &next_id;
    int build(int lo, int hi) {
      if (lo == hi) return lo;
      const int me = next_id++;
      if (static_cast<int>(parent.size()) <= me) parent.resize(me + 1, -2);
      const int mid = (lo + hi) / 2;
      parent[build(lo, mid)] = me;
      parent[build(mid + 1, hi)] = me;
      return me;
    }
  } builder{parent, next_id};
  const int top = builder.build(1, d);
  parent[top] = 0;
  return bmt::make_tree(parent, d);
}

}  // namespace testutil

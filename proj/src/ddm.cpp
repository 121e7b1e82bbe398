#include "bmt/ddm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace bmt {

SortedPathTree sorted_path_tree(const Vector &x) {
  require_distinct_nonzero(x);
  const Vector xa = augment_data(x);
  SortedPathTree path;
  path.order.resize(xa.size());
  std::iota(path.order.begin(), path.order.end(), 0);
  std::sort(path.order.begin(), path.order.end(),
            [&](int a, int b) { return xa(a) < xa(b); });
  return path;
}

DdmMleResult ddm_mle(const Vector &x) {
  const SortedPathTree path = sorted_path_tree(x);
  const Vector xa = augment_data(x);
  const int n = static_cast<int>(xa.size());
  DdmMleResult out;
  out.P = Matrix::Zero(n, n);
  for (auto &[a, b] : path.edges()) {
    const double gap = xa(b) - xa(a);
    out.P(a, b) = 1.0 / (gap * gap);
    out.P(b, a) = out.P(a, b);
  }
  out.K = fiedler_inverse(out.P);
  return out;
}

namespace {

// Support graph of P (entries above tol) as an adjacency list; throws unless
// it is a spanning tree of all d+1 nodes.
std::vector<std::vector<int>> support_tree(const Matrix &P, double tol) {
  const int n = static_cast<int>(P.rows());
  std::vector<std::vector<int>> adj(n);
  int n_edges = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (P(i, j) > tol) {
        adj[i].push_back(j);
        adj[j].push_back(i);
        ++n_edges;
      }
  std::vector<bool> seen(n, false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  int reached = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        q.push(v);
      }
  }
  if (reached != n || n_edges != n - 1)
    throw DisconnectedSupport("verify_kkt: support of P is not a spanning tree");
  return adj;
}

}  // namespace

KktReport verify_kkt(const Matrix &P, const Vector &x, double tol) {
  const Vector xa = augment_data(x);
  const int n = static_cast<int>(xa.size());
  if (P.rows() != n || P.cols() != n)
    throw InvalidTree("verify_kkt: P must be (d+1) x (d+1)");
  const Matrix D = squared_distance(x);
  const auto adj = support_tree(P, 0.0);

  KktReport report;
  report.nonneg = P.minCoeff() >= -tol;

  // Gradient of log(spanning-tree sum) - sum P_kl D_kl at a tree-supported
  // point: the tree sum reduces to the single supported tree, and the ratio of
  // trees forced through (k, l) telescopes to the sum of reciprocal weights
  // along the supported path from k to l.
  std::vector<int> prev(n);
  for (int k = 0; k < n; ++k) {
    std::fill(prev.begin(), prev.end(), -1);
    prev[k] = k;
    std::queue<int> q;
    q.push(k);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (prev[v] == -1) {
          prev[v] = u;
          q.push(v);
        }
    }
    for (int l = k + 1; l < n; ++l) {
      double path_sum = 0;
      for (int v = l; v != k; v = prev[v]) path_sum += 1.0 / P(v, prev[v]);
      KktReport::Pair pair;
      pair.k = k;
      pair.l = l;
      pair.weight = P(k, l);
      pair.gradient = path_sum - D(k, l);
      pair.slack = pair.gradient * pair.weight;
      report.max_gradient = std::max(report.max_gradient, pair.gradient);
      report.max_slack = std::max(report.max_slack, std::abs(pair.slack));
      report.pairs.push_back(pair);
    }
  }
  report.pass = report.nonneg && report.max_gradient <= tol && report.max_slack <= tol;
  return report;
}

TreeWithParams ddm_mle_tree(const Vector &x) {
  const SortedPathTree path = sorted_path_tree(x);
  const Vector xa = augment_data(x);
  const int d = static_cast<int>(x.size());
  const int pos0 = static_cast<int>(
      std::find(path.order.begin(), path.order.end(), 0) - path.order.begin());

  std::vector<int> parent(d + 1, -1);
  std::vector<double> theta(d + 1, 0.0);
  auto add_node = [&](int par, double th) {
    parent.push_back(par);
    theta.push_back(th);
    return static_cast<int>(parent.size()) - 1;
  };

  // Descend one side of the sorted path. Interior path nodes become latent
  // nodes with a zero-variance pendant leaf, so every data value stays a leaf
  // and no node is left with degree two. The chain endpoint is a plain leaf.
  auto attach_chain = [&](int anchor, int from, int step, int count) {
    int par = anchor;
    int prev = path.order[from - step];
    for (int t = 0; t < count; ++t) {
      const int node = path.order[from + step * t];
      const double gap = xa(node) - xa(prev);
      if (t + 1 == count) {
        parent[node] = par;
        theta[node] = gap * gap;
      } else {
        const int latent = add_node(par, gap * gap);
        parent[node] = latent;
        theta[node] = 0.0;
        par = latent;
      }
      prev = node;
    }
  };

  const int left = pos0;
  const int right = d - pos0;
  if (left > 0 && right > 0) {
    // Zero sits between data values, so both directions descend from a hub
    // latent node hung off the root with variance zero.
    const int hub = add_node(0, 0.0);
    attach_chain(hub, pos0 - 1, -1, left);
    attach_chain(hub, pos0 + 1, +1, right);
  } else if (right > 0) {
    attach_chain(0, pos0 + 1, +1, right);
  } else {
    attach_chain(0, pos0 - 1, -1, left);
  }

  TreeWithParams out;
  out.tree = make_tree(parent, d);
  validate(out.tree);
  out.theta = Eigen::Map<Vector>(theta.data(), static_cast<int>(theta.size()));
  return out;
}

}  // namespace bmt

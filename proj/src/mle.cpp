#include "bmt/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bmt {

namespace {

constexpr double kTieTol = 1e-12;

bool log_values_tied(double a, double b) {
  return std::abs(a - b) <= kTieTol * std::max({1.0, std::abs(a), std::abs(b)});
}

long long saturating_mul(long long a, long long b) {
  const long long cap = std::numeric_limits<long long>::max();
  if (a > cap / b) return cap;
  return a * b;
}

long long saturating_add(long long a, long long b) {
  const long long cap = std::numeric_limits<long long>::max();
  if (a > cap - b) return cap;
  return a + b;
}

}  // namespace

double objective(const RootedTree &tree, const SparsityStructure &sparsity, const Vector &x) {
  if (!is_fully_observed(tree, sparsity))
    throw NotFullyObserved("objective: sparsity structure is not fully observed");
  require_distinct_nonzero(x);
  const Vector xa = augment_data(x);
  const ContractedTree ct = contract_set(tree, sparsity);
  double log_sum = 0;
  for (const auto &e : ct.edges) log_sum += std::log(std::abs(xa(e.a) - xa(e.b)));
  return std::exp(log_sum);
}

MleResult mle(const RootedTree &tree, const Vector &x) {
  validate(tree);
  require_distinct_nonzero(x);
  const int n = tree.size();
  const int d = tree.n_leaves;
  if (static_cast<int>(x.size()) != d)
    throw InvalidTree("mle: data length does not match leaf count");
  const Vector xa = augment_data(x);

  // Preorder traversal; reversed it visits children before parents. Leaves are
  // numbered in visit order so every subtree owns a contiguous position range,
  // which gives O(1) membership tests for the value candidates.
  std::vector<int> pre;
  pre.reserve(n);
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    pre.push_back(u);
    for (auto it = tree.children[u].rbegin(); it != tree.children[u].rend(); ++it)
      stack.push_back(*it);
  }
  std::vector<int> leaf_pos(n, -1), lo(n, 0), hi(n, 0);
  int next_pos = 0;
  for (int u : pre)
    if (tree.is_leaf(u)) leaf_pos[u] = next_pos++;
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int u = *it;
    if (tree.is_leaf(u)) {
      lo[u] = leaf_pos[u];
      hi[u] = leaf_pos[u] + 1;
    } else {
      lo[u] = n;
      hi[u] = 0;
      for (int c : tree.children[u]) {
        lo[u] = std::min(lo[u], lo[c]);
        hi[u] = std::max(hi[u], hi[c]);
      }
    }
  }
  auto in_subtree = [&](int node, int leaf) {
    return leaf_pos[leaf] >= lo[node] && leaf_pos[leaf] < hi[node];
  };

  // Leaf labels ordered by data value, for the smallest-value tie-break.
  std::vector<int> by_value(d);
  std::iota(by_value.begin(), by_value.end(), 1);
  std::sort(by_value.begin(), by_value.end(), [&](int a, int b) { return xa(a) < xa(b); });

  // log|xa(i) - xa(j)| precomputed once; the O(d^3) inner loop only adds.
  Matrix log_gap(d + 1, d + 1);
  for (int i = 0; i <= d; ++i)
    for (int j = 0; j <= d; ++j)
      log_gap(i, j) = (i == j) ? 0.0 : std::log(std::abs(xa(i) - xa(j)));

  // R(i, l): log contribution of subtree(i) plus the edge above i, given the
  // parent's observed value is xa(l). choice -1 is the zero-edge branch (i
  // inherits xa(l)); otherwise the chosen leaf value's label. tie holds the
  // number of optimal backtrack choices below and including this state.
  Matrix logR = Matrix::Zero(n, d + 1);
  Matrix logC = Matrix::Zero(n, d + 1);
  std::vector<std::vector<int>> choice(n, std::vector<int>(d + 1, -1));
  std::vector<std::vector<long long>> tieR(n, std::vector<long long>(d + 1, 1));
  std::vector<std::vector<long long>> tieC(n, std::vector<long long>(d + 1, 1));

  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int i = *it;
    if (tree.is_leaf(i)) {
      for (int l = 0; l <= d; ++l) {
        if (l == i) {
          logR(i, l) = 0;
          choice[i][l] = -1;
        } else {
          logR(i, l) = log_gap(i, l);
          choice[i][l] = i;
        }
      }
      continue;
    }
    for (int l = 0; l <= d; ++l) {
      double c = 0;
      long long t = 1;
      for (int j : tree.children[i]) {
        c += logR(j, l);
        t = saturating_mul(t, tieR[j][l]);
      }
      logC(i, l) = c;
      tieC[i][l] = t;
    }
    if (tree.is_root(i)) continue;
    for (int l = 0; l <= d; ++l) {
      if (l >= 1 && in_subtree(i, l)) {
        // The parent's value lives in this subtree, so the edge above i must
        // be zero and i is forced to xa(l).
        logR(i, l) = logC(i, l);
        choice[i][l] = -1;
        tieR[i][l] = tieC[i][l];
        continue;
      }
      double best = logC(i, l);
      int best_choice = -1;
      long long ties = tieC[i][l];
      for (int m : by_value) {
        if (!in_subtree(i, m)) continue;
        const double cand = log_gap(l, m) + logC(i, m);
        if (log_values_tied(cand, best)) {
          ties = saturating_add(ties, tieC[i][m]);
        } else if (cand < best) {
          best = cand;
          best_choice = m;
          ties = tieC[i][m];
        }
      }
      logR(i, l) = best;
      choice[i][l] = best_choice;
      tieR[i][l] = ties;
    }
  }

  MleResult out;
  out.objective_log = logC(0, 0);
  out.objective = std::exp(out.objective_log);
  out.loglik = -0.5 * d - out.objective_log;
  out.tie_count = tieC[0][0];

  // Backtrack the chosen observed value of every node and read off the zeroed
  // edges and surviving edge parameters.
  std::vector<int> val(n, 0);
  out.theta = Vector::Zero(n);
  std::vector<std::pair<int, int>> work;
  for (int c : tree.children[0]) work.push_back({c, 0});
  while (!work.empty()) {
    auto [i, l] = work.back();
    work.pop_back();
    const int ci = choice[i][l];
    if (ci == -1) {
      out.sparsity.zeroed.insert(i);
      val[i] = l;
    } else {
      val[i] = ci;
      const double gap = xa(ci) - xa(l);
      out.theta(i) = gap * gap;
    }
    for (int j : tree.children[i]) work.push_back({j, val[i]});
  }
  return out;
}

MleResult brute_force_mle(const RootedTree &tree, const Vector &x) {
  validate(tree);
  require_distinct_nonzero(x);
  const int d = tree.n_leaves;
  if (static_cast<int>(x.size()) != d)
    throw InvalidTree("brute_force_mle: data length does not match leaf count");
  const Vector xa = augment_data(x);

  const auto structures = enumerate_fully_observed(tree);
  double best = std::numeric_limits<double>::infinity();
  const SparsityStructure *chosen = nullptr;
  long long ties = 0;
  for (const auto &s : structures) {
    const ContractedTree ct = contract_set(tree, s);
    double log_sum = 0;
    for (const auto &e : ct.edges) log_sum += std::log(std::abs(xa(e.a) - xa(e.b)));
    if (chosen && log_values_tied(log_sum, best)) {
      ++ties;
      if (s.zeroed < chosen->zeroed) chosen = &s;
      best = std::min(best, log_sum);
    } else if (log_sum < best) {
      best = log_sum;
      chosen = &s;
      ties = 1;
    }
  }

  MleResult out;
  out.sparsity = *chosen;
  out.objective_log = best;
  out.objective = std::exp(best);
  out.loglik = -0.5 * d - best;
  out.tie_count = ties;
  const ContractedTree ct = contract_set(tree, *chosen);
  out.theta = Vector::Zero(tree.size());
  for (const auto &e : ct.edges) {
    const double gap = xa(e.a) - xa(e.b);
    out.theta(e.orig_child) = gap * gap;
  }
  return out;
}

double loglik_of_result(const RootedTree &tree, const MleResult &result, const Vector &x) {
  const Matrix sigma = build_covariance(tree, result.theta);
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw SingularCovariance("loglik_of_result: covariance is singular");
  double logdet = 0;
  for (int i = 0; i < sigma.rows(); ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
  const double dense = -0.5 * logdet - 0.5 * x.dot(llt.solve(x));
  const double closed = -0.5 * x.size() - result.objective_log;
  if (std::abs(dense - closed) > 1e-9 * std::max(1.0, std::abs(closed)))
    throw SingularCovariance("loglik_of_result: dense value disagrees with closed form");
  return dense;
}

}  // namespace bmt

#include "bmt/estimators.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace bmt {

namespace {

struct Cluster {
  int node;                  // tree node id
  double height;             // UPGMA merge height
  std::vector<int> members;  // leaf labels
};

TreeWithParams assemble(const std::vector<int> &parent, const std::vector<double> &theta,
                        int n_leaves) {
  TreeWithParams out;
  out.tree = make_tree(parent, n_leaves);
  validate(out.tree);
  out.theta = Vector::Zero(static_cast<int>(theta.size()));
  for (std::size_t i = 0; i < theta.size(); ++i) out.theta(static_cast<int>(i)) = theta[i];
  return out;
}

}  // namespace

EstimatorOutput upgma(const Vector &x) {
  const int d = static_cast<int>(x.size());
  if (d < 1) throw TooSmall("upgma: empty data");
  EstimatorOutput out;
  if (d == 1) {
    out.tree = assemble({-1, 0}, {0.0, x(0) * x(0)}, 1);
    out.covariance = build_covariance(out.tree->tree, out.tree->theta);
    return out;
  }

  const int n_nodes = 2 * d;  // root, d leaves, d-1 merge nodes
  std::vector<int> parent(n_nodes, -1);
  std::vector<double> theta(n_nodes, 0.0);

  std::vector<Cluster> active;
  for (int i = 1; i <= d; ++i) active.push_back({i, 0.0, {i}});
  std::vector<std::vector<double>> dist(d, std::vector<double>(d, 0.0));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) dist[i][j] = std::abs(x(i) - x(j));

  int next_id = d + 1;
  while (active.size() > 1) {
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j)
        if (dist[i][j] < dist[bi][bj]) {
          bi = i;
          bj = j;
        }
    const double delta = dist[bi][bj];
    const double h = delta / 2;
    const int u = next_id++;
    parent[active[bi].node] = u;
    theta[active[bi].node] = h - active[bi].height;
    parent[active[bj].node] = u;
    theta[active[bj].node] = h - active[bj].height;

    Cluster merged{u, h, active[bi].members};
    merged.members.insert(merged.members.end(), active[bj].members.begin(),
                          active[bj].members.end());
    const double wa = static_cast<double>(active[bi].members.size());
    const double wb = static_cast<double>(active[bj].members.size());
    std::vector<double> new_row;
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (k == bi || k == bj) continue;
      new_row.push_back((wa * dist[bi][k] + wb * dist[bj][k]) / (wa + wb));
    }
    // Drop rows/columns bj then bi, append the merged cluster.
    for (auto idx : {bj, bi}) {
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(idx));
      dist.erase(dist.begin() + static_cast<std::ptrdiff_t>(idx));
      for (auto &row : dist) row.erase(row.begin() + static_cast<std::ptrdiff_t>(idx));
    }
    active.push_back(merged);
    for (std::size_t k = 0; k < new_row.size(); ++k) dist[k].push_back(new_row[k]);
    dist.push_back(new_row);
    dist.back().push_back(0.0);
  }
  parent[active[0].node] = 0;
  theta[active[0].node] = 0.0;

  EstimatorOutput out2;
  out2.tree = assemble(parent, theta, d);
  out2.covariance = build_covariance(out2.tree->tree, out2.tree->theta);
  return out2;
}

EstimatorOutput neighbor_joining(const Vector &x) {
  const int d = static_cast<int>(x.size());
  if (d < 2) throw TooSmall("neighbor_joining: need at least two leaves");

  const int n_nodes = 2 * d;
  std::vector<int> parent(n_nodes, -1);
  std::vector<double> theta(n_nodes, 0.0);

  std::vector<Cluster> active;
  for (int i = 1; i <= d; ++i) active.push_back({i, 0.0, {i}});
  auto m_of = [&](const Cluster &a, const Cluster &b) {
    double best = std::numeric_limits<double>::infinity();
    for (int p : a.members)
      for (int q : b.members) {
        const double diff = x(p - 1) - x(q - 1);
        best = std::min(best, diff * diff);
      }
    return best;
  };

  int next_id = d + 1;
  while (active.size() > 2) {
    const std::size_t N = active.size();
    std::vector<std::vector<double>> m(N, std::vector<double>(N, 0.0));
    std::vector<double> r(N, 0.0);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i + 1; j < N; ++j) {
        m[i][j] = m[j][i] = m_of(active[i], active[j]);
        r[i] += m[i][j];
        r[j] += m[i][j];
      }
    std::size_t bi = 0, bj = 1;
    double best_q = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i + 1; j < N; ++j) {
        const double q = (static_cast<double>(N) - 2) * m[i][j] - r[i] - r[j];
        if (q < best_q) {
          best_q = q;
          bi = i;
          bj = j;
        }
      }
    double b1 = 0.5 * m[bi][bj] + (r[bi] - r[bj]) / (2 * (static_cast<double>(N) - 2));
    double b2 = m[bi][bj] - b1;
    b1 = std::max(b1, 0.0);
    b2 = std::max(b2, 0.0);
    const int u = next_id++;
    parent[active[bi].node] = u;
    theta[active[bi].node] = b1;
    parent[active[bj].node] = u;
    theta[active[bj].node] = b2;
    Cluster merged{u, 0.0, active[bi].members};
    merged.members.insert(merged.members.end(), active[bj].members.begin(),
                          active[bj].members.end());
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
    active.push_back(merged);
  }

  const double m_last = m_of(active[0], active[1]);
  const int z = next_id++;
  parent[active[0].node] = z;
  theta[active[0].node] = m_last / 2;
  parent[active[1].node] = z;
  theta[active[1].node] = m_last / 2;
  parent[z] = 0;
  theta[z] = 0.0;

  parent.resize(next_id);
  theta.resize(next_id);
  EstimatorOutput out;
  out.tree = assemble(parent, theta, d);
  out.covariance = build_covariance(out.tree->tree, out.tree->theta);
  return out;
}

EstimatorOutput least_squares(const RootedTree &tree, const Vector &x) {
  validate(tree);
  const int n = tree.size();
  const int d = tree.n_leaves;
  if (static_cast<int>(x.size()) != d)
    throw InvalidTree("least_squares: data length does not match leaf count");
  const int n_edges = n - 1;  // edges indexed by non-root node k+1

  std::vector<std::vector<char>> mask(n_edges, std::vector<char>(d, 0));
  for (int k = 0; k < n_edges; ++k)
    for (int leaf : descendant_leaves(tree, k + 1)) mask[k][leaf - 1] = 1;

  // Gram of the design matrices 1_de 1_de': inner product is the squared size
  // of the leaf-set intersection. Targets b_k = (sum of x over de(k))^2.
  Matrix G(n_edges, n_edges);
  Vector b(n_edges);
  for (int k = 0; k < n_edges; ++k) {
    double s = 0;
    for (int i = 0; i < d; ++i)
      if (mask[k][i]) s += x(i);
    b(k) = s * s;
    for (int l = k; l < n_edges; ++l) {
      int common = 0;
      for (int i = 0; i < d; ++i) common += mask[k][i] && mask[l][i];
      G(k, l) = static_cast<double>(common) * common;
      G(l, k) = G(k, l);
    }
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
  const double step = 1.0 / es.eigenvalues().maxCoeff();
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());

  Vector th = Vector::Zero(n_edges);
  double residual = 0;
  bool converged = false;
  for (int it = 0; it < 100000; ++it) {
    const Vector g = G * th - b;
    residual = 0;
    for (int k = 0; k < n_edges; ++k)
      residual = std::max(residual, th(k) > 0 ? std::abs(g(k)) : std::max(0.0, -g(k)));
    if (residual <= 1e-8 * scale) {
      converged = true;
      break;
    }
    th = (th - step * g).cwiseMax(0.0);
  }
  if (!converged)
    throw NonConvergence("least_squares: projected gradient stalled, residual " +
                         std::to_string(residual));

  EstimatorOutput out;
  out.tree = TreeWithParams{tree, Vector::Zero(n)};
  out.tree->theta.tail(n_edges) = th;
  out.covariance = build_covariance(tree, out.tree->theta);
  return out;
}

EdgeParams one_third_shrink(const EdgeParams &theta) { return theta / 3.0; }

EstimatorOutput mxshrink(const Matrix &covariance, bool clamp) {
  const int d = static_cast<int>(covariance.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(covariance);
  EstimatorOutput out;
  Vector shrunk(d);
  // Eigen returns ascending order; the formula indexes decreasing eigenvalues.
  for (int i = 1; i <= d; ++i) {
    double divisor = 1.0 + d - 2.0 * i;
    if (clamp && divisor < 1.0) {
      divisor = 1.0;
      out.clamped = true;
    }
    shrunk(d - i) = es.eigenvalues()(d - i) / divisor;
  }
  out.covariance = es.eigenvectors() * shrunk.asDiagonal() * es.eigenvectors().transpose();
  return out;
}

EstimatorOutput linear_shrink(const Matrix &sigma_hat, const Matrix &sigma_star, double beta_sq) {
  const int d = static_cast<int>(sigma_star.rows());
  const double mu = sigma_star.trace() / d;
  const double alpha_sq = (sigma_star - mu * Matrix::Identity(d, d)).squaredNorm();
  EstimatorOutput out;
  if (alpha_sq + beta_sq == 0) {
    out.covariance = sigma_star;
    return out;
  }
  const double delta1 = beta_sq * mu / (alpha_sq + beta_sq);
  const double delta2 = alpha_sq / (alpha_sq + beta_sq);
  out.covariance = delta1 * Matrix::Identity(d, d) + delta2 * sigma_hat;
  return out;
}

}  // namespace bmt

#include "bmt/contrast.hpp"

#include <cmath>

namespace bmt {

ContrastResult contrast_mle(const RootedTree &tree, const Vector &x) {
  validate(tree);
  const int d = tree.n_leaves;
  if (d < 2) throw TooSmall("contrast_mle: need at least two leaves");
  if (static_cast<int>(x.size()) != d)
    throw InvalidTree("contrast_mle: data length does not match leaf count");

  ContrastResult out;
  out.rerooted = reroot_at_leaf(tree, 1);
  out.transformed_data = Vector::Zero(d - 1);
  for (int j = 1; j <= d - 1; ++j)
    out.transformed_data(j - 1) = x(out.rerooted.new_leaf_to_old[j] - 1) - x(0);
  try {
    require_distinct_nonzero(out.transformed_data);
  } catch (const Error &e) {
    throw DegenerateContrast(std::string("contrast_mle: ") + e.what());
  }
  out.mle = mle(out.rerooted.tree, out.transformed_data);
  return out;
}

std::vector<std::pair<double, double>> plgtm_divergence_witness(
    const Vector &x, const std::vector<double> &epsilons) {
  const int d = static_cast<int>(x.size());
  int a = -1, b = -1;
  for (int i = 0; i < d && a < 0; ++i)
    for (int j = i + 1; j < d; ++j)
      if (x(i) == x(j)) {
        a = i;
        b = j;
        break;
      }
  if (a < 0) throw NoDuplicate("plgtm_divergence_witness: no repeated data value");

  // Star over d leaves: root 0, hub d+1, leaves 1..d. Pin the hub at the
  // duplicated value (zero edge above leaf a) and interpolate the remaining
  // leaves exactly; only leaf b's variance varies.
  std::vector<int> parent(d + 2, -1);
  const int hub = d + 1;
  parent[hub] = 0;
  for (int i = 1; i <= d; ++i) parent[i] = hub;
  RootedTree star = make_tree(parent, d);
  validate(star);

  EdgeParams theta = Vector::Zero(d + 2);
  theta(hub) = x(a) * x(a);
  for (int i = 0; i < d; ++i)
    if (i != a && i != b) theta(i + 1) = (x(i) - x(a)) * (x(i) - x(a));

  std::vector<std::pair<double, double>> out;
  for (double eps : epsilons) {
    if (eps <= 0) throw ZeroValue("plgtm_divergence_witness: epsilon must be positive");
    theta(b + 1) = eps;
    const Matrix sigma = build_covariance(star, theta);
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw SingularCovariance("plgtm_divergence_witness: covariance is singular");
    double logdet = 0;
    for (int i = 0; i < d; ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
    out.push_back({eps, -0.5 * logdet - 0.5 * x.dot(llt.solve(x))});
  }
  return out;
}

}  // namespace bmt

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bmt/ddm.hpp"
#include "bmt/mle.hpp"
#include "helpers.hpp"

using namespace bmt;

namespace {

Vector worked_example() {
  Vector x(4);
  x << -5, -2, 4, 8;
  return x;
}

}  // namespace

TEST_CASE("sorted_path_tree orders augmented values") {
  const SortedPathTree path = sorted_path_tree(worked_example());
  CHECK(path.order == std::vector<int>{1, 2, 0, 3, 4});
  const auto edges = path.edges();
  CHECK(edges.size() == 4);
  CHECK(edges[1] == std::pair<int, int>{2, 0});
  Vector dup(2);
  dup << 1, 1;
  CHECK_THROWS_AS(sorted_path_tree(dup), DuplicateValue);
}

TEST_CASE("ddm_mle reproduces the printed worked example exactly") {
  const DdmMleResult r = ddm_mle(worked_example());
  CHECK(r.P(0, 2) == doctest::Approx(1.0 / 4).epsilon(1e-14));
  CHECK(r.P(0, 3) == doctest::Approx(1.0 / 16).epsilon(1e-14));
  CHECK(r.P(1, 2) == doctest::Approx(1.0 / 9).epsilon(1e-14));
  CHECK(r.P(3, 4) == doctest::Approx(1.0 / 16).epsilon(1e-14));
  CHECK(r.P(0, 1) == 0);
  CHECK(r.P(1, 3) == 0);

  Matrix K(4, 4);
  K << 1.0 / 9, -1.0 / 9, 0, 0,
       -1.0 / 9, 13.0 / 36, 0, 0,
       0, 0, 1.0 / 8, -1.0 / 16,
       0, 0, -1.0 / 16, 1.0 / 16;
  CHECK((r.K - K).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(is_ddm(r.K));
}

TEST_CASE("verify_kkt passes on the closed-form output") {
  bmt::Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + t % 5;
    const Vector x = testutil::random_gaussian(d, rng);
    const DdmMleResult r = ddm_mle(x);
    const KktReport report = verify_kkt(r.P, x);
    CHECK(report.pass);
    CHECK(report.nonneg);
    CHECK(report.max_gradient <= 1e-9);
    CHECK(report.max_slack <= 1e-9);
  }
}

TEST_CASE("verify_kkt rejects perturbed weights") {
  const Vector x = worked_example();
  DdmMleResult r = ddm_mle(x);
  r.P(1, 2) *= 2;  // too much weight on a supported edge
  r.P(2, 1) = r.P(1, 2);
  CHECK(verify_kkt(r.P, x).pass == false);
}

TEST_CASE("verify_kkt requires spanning-tree support") {
  const Vector x = worked_example();
  Matrix P = Matrix::Zero(5, 5);
  P(0, 1) = P(1, 0) = 1;  // two components
  P(2, 3) = P(3, 2) = 1;
  CHECK_THROWS_AS(verify_kkt(P, x), DisconnectedSupport);
}

TEST_CASE("ddm_mle_tree realizes the closed form as a valid tree") {
  const Vector x = worked_example();
  const TreeWithParams tp = ddm_mle_tree(x);
  CHECK_NOTHROW(validate(tp.tree));
  CHECK(tp.tree.n_leaves == 4);

  std::vector<double> th(tp.theta.data() + 1, tp.theta.data() + tp.theta.size());
  std::sort(th.begin(), th.end());
  CHECK(th == std::vector<double>{0, 0, 0, 4, 9, 16, 16});

  // The tree's leaf covariance inverts to the closed-form precision matrix.
  const Matrix sigma = build_covariance(tp.tree, tp.theta);
  const DdmMleResult r = ddm_mle(x);
  CHECK((sigma * r.K - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("ddm_mle_tree covers one-sided and single-leaf data") {
  bmt::Rng rng(22);
  for (int t = 0; t < 50; ++t) {
    const int d = 1 + t % 6;
    Vector x(d);
    for (int i = 0; i < d; ++i)
      x(i) = (t % 3 == 0 ? 1 : -1) * (rng.next_double() + 0.01) * (t % 3 == 2 ? (i % 2 ? 1 : -1) : 1);
    bool ok = true;
    try {
      require_distinct_nonzero(x);
    } catch (const Error &) {
      ok = false;  // astronomically unlikely
    }
    if (!ok) continue;
    const TreeWithParams tp = ddm_mle_tree(x);
    CHECK_NOTHROW(validate(tp.tree));
    const Matrix sigma = build_covariance(tp.tree, tp.theta);
    const DdmMleResult r = ddm_mle(x);
    CHECK((sigma * r.K - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("relaxation dominates the exact tree MLE") {
  bmt::Rng rng(23);
  for (int t = 0; t < 50; ++t) {
    const int d = 2 + t % 5;
    const RootedTree tree = testutil::random_topology(d, rng);
    const Vector x = testutil::random_gaussian(d, rng);
    const DdmMleResult r = ddm_mle(x);
    const MleResult m = mle(tree, x);
    CHECK(log_likelihood(r.K, x) >= m.loglik - 1e-9);
  }
}

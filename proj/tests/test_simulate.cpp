#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "bmt/mle.hpp"
#include "bmt/simulate.hpp"
#include "helpers.hpp"

using namespace bmt;

namespace {

double root_leaf_sum(const TreeWithParams &tp, int leaf) {
  double s = 0;
  for (int v = leaf; v != 0; v = tp.tree.parent[v]) s += tp.theta(v);
  return s;
}

}  // namespace

TEST_CASE("rng streams are deterministic and independent") {
  Rng a = make_rng(7, 3, 0, 1);
  Rng b = make_rng(7, 3, 0, 1);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // Different coordinates give different streams.
  Rng c = make_rng(7, 3, 0, 2);
  Rng d = make_rng(7, 3, 1, 1);
  Rng e = make_rng(8, 3, 0, 1);
  Rng base = make_rng(7, 3, 0, 1);
  const std::uint64_t first = base.next_u64();
  CHECK(c.next_u64() != first);
  CHECK(d.next_u64() != first);
  CHECK(e.next_u64() != first);
}

TEST_CASE("rng uniform and normal moments") {
  Rng rng(99);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0);
    CHECK(u < 1);
    su += u;
    const double z = rng.next_normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) <= 0.02);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("random_ultrametric_tree produces valid ultrametric trees") {
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    const int d = 2 + t % 7;
    const TreeWithParams tp = random_ultrametric_tree(d, rng);
    CHECK_NOTHROW(validate(tp.tree));
    CHECK(tp.tree.n_leaves == d);
    CHECK(tp.tree.size() == 2 * d);
    CHECK(tp.theta.tail(2 * d - 1).minCoeff() >= 0);
    const double h = root_leaf_sum(tp, 1);
    CHECK(h > 0);
    for (int leaf = 2; leaf <= d; ++leaf)
      CHECK(std::abs(root_leaf_sum(tp, leaf) - h) <= 1e-12);
  }
  CHECK_THROWS_AS(random_ultrametric_tree(1, rng), TooSmall);

  // d = 2 has a single possible shape.
  Rng r2(18);
  const TreeWithParams tp2 = random_ultrametric_tree(2, r2);
  CHECK(tp2.tree.parent[1] == 3);
  CHECK(tp2.tree.parent[2] == 3);
  CHECK(tp2.tree.parent[3] == 0);
}

TEST_CASE("normalize_operator_norm hits the target exactly") {
  Rng rng(19);
  for (int t = 0; t < 20; ++t) {
    const int d = 2 + t % 5;
    TreeWithParams tp = random_ultrametric_tree(d, rng);
    const EdgeParams scaled = normalize_operator_norm(tp.tree, tp.theta, 2.5);
    const Matrix sigma = build_covariance(tp.tree, scaled);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(2.5).epsilon(1e-10));
  }
  const RootedTree single = make_tree({-1, 0}, 1);
  EdgeParams zero = Vector::Zero(2);
  CHECK_THROWS_AS(normalize_operator_norm(single, zero, 1.0), ZeroCovariance);
}

TEST_CASE("sample_bmtm matches the model covariance empirically") {
  Rng topo_rng(20);
  TreeWithParams tp = random_ultrametric_tree(3, topo_rng);
  const Matrix sigma = build_covariance(tp.tree, tp.theta);

  const int n = 100000;
  Matrix acc = Matrix::Zero(3, 3);
  Vector mean_acc = Vector::Zero(3);
  Rng rng(21);
  for (int i = 0; i < n; ++i) {
    const Vector x = sample_bmtm(tp.tree, tp.theta, rng);
    acc += x * x.transpose();
    mean_acc += x;
  }
  acc /= n;
  mean_acc /= n;
  // Standard error of an entry of the empirical covariance is O(sigma / sqrt(n)).
  const double scale = sigma.cwiseAbs().maxCoeff();
  CHECK((acc - sigma).cwiseAbs().maxCoeff() <= 3 * 2 * scale / std::sqrt(n));
  CHECK(mean_acc.cwiseAbs().maxCoeff() <= 3 * std::sqrt(scale) / std::sqrt(n) * 3);

  // Zero-parameter edges contribute nothing.
  EdgeParams zero = Vector::Zero(tp.tree.size());
  Rng rz(22);
  CHECK(sample_bmtm(tp.tree, zero, rz).cwiseAbs().maxCoeff() == 0);

  // Determinism: identical streams give identical draws.
  Rng ra(23), rb(23);
  CHECK((sample_bmtm(tp.tree, tp.theta, ra) - sample_bmtm(tp.tree, tp.theta, rb))
            .cwiseAbs()
            .maxCoeff() == 0);
}

TEST_CASE("run_experiment is deterministic and thread-invariant") {
  ExperimentConfig config;
  config.d_values = {3, 4};
  config.trials = 8;
  config.seed = 5;
  config.estimators = {"bmtm", "upgma", "linshrink"};
  config.bias_replicates = 5;
  config.beta_sq_replicates = 5;

  const RiskTable a = run_experiment(config);
  const RiskTable b = run_experiment(config);
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.to_csv() == b.to_csv());

  ExperimentConfig threaded = config;
  threaded.threads = 4;
  CHECK(run_experiment(threaded).to_csv() == a.to_csv());

  // 2 dimensions x 3 estimators x 3 metrics.
  CHECK(a.rows.size() == 18);
  for (const auto &row : a.rows) {
    CHECK(row.trials == 8);
    CHECK(row.error.empty());
    CHECK(std::isfinite(row.mean));
    CHECK(row.p10 <= row.p90 + 1e-15);
    CHECK(row.mean >= 0);
  }
}

TEST_CASE("run_experiment validates its inputs") {
  ExperimentConfig config;
  config.d_values = {3};
  config.trials = 2;
  config.estimators = {"nope"};
  CHECK_THROWS_AS(run_experiment(config), Error);
  config.estimators = {"bmtm"};
  config.d_values = {1};
  CHECK_THROWS_AS(run_experiment(config), TooSmall);
  config.d_values = {3};
  config.trials = 0;
  CHECK_THROWS_AS(run_experiment(config), TooSmall);
}

TEST_CASE("csv layout") {
  ExperimentConfig config;
  config.d_values = {2};
  config.trials = 3;
  config.seed = 11;
  config.estimators = {"ddm"};
  config.bias_replicates = 3;
  const RiskTable table = run_experiment(config);
  const std::string csv = table.to_csv();
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "d,estimator,metric,mean,p10,p90,trials,seed,error");
  int n_lines = 0;
  while (std::getline(in, line)) {
    ++n_lines;
    CHECK(line.rfind("2,ddm,", 0) == 0);
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
  }
  CHECK(n_lines == 3);
}

TEST_CASE("monte carlo agrees with an analytic risk") {
  // For d = 1 data x ~ N(0, 1), E (x^2/3 - 1)^2 = E x^4/9 - 2 E x^2/3 + 1 = 2/3.
  // run_experiment starts at d = 2, so check the arithmetic directly on the
  // one-third-shrunk univariate MLE.
  Rng rng(55);
  const int n = 200000;
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_normal();
    const double err = x * x / 3.0 - 1.0;
    acc += err * err;
  }
  CHECK(acc / n == doctest::Approx(2.0 / 3).epsilon(0.03));
}

TEST_CASE("all registered estimators run end to end") {
  ExperimentConfig config;
  config.d_values = {4};
  config.trials = 3;
  config.seed = 9;
  config.bias_replicates = 3;
  config.beta_sq_replicates = 3;
  const RiskTable table = run_experiment(config);
  CHECK(table.rows.size() == registered_estimators().size() * 3);
  for (const auto &row : table.rows) {
    CHECK(row.error.empty());
    CHECK(row.trials == 3);
  }
}

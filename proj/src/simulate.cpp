#include "bmt/simulate.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <thread>

#include "bmt/ddm.hpp"
#include "bmt/estimators.hpp"
#include "bmt/likelihood.hpp"
#include "bmt/mle.hpp"

namespace bmt {

namespace {

std::uint64_t splitmix64(std::uint64_t &s) {
  std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0xD1B54A32D192ED03ULL * b);
  return splitmix64(s);
}

}  // namespace

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = 1.0 - next_double();  // in (0, 1]
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

Rng make_rng(std::uint64_t seed, std::uint64_t d, std::uint64_t trial, std::uint64_t purpose) {
  return Rng(mix(mix(mix(seed, d), trial), purpose));
}

TreeWithParams random_ultrametric_tree(int d, Rng &rng) {
  if (d < 2) throw TooSmall("random_ultrametric_tree: need d >= 2");
  std::vector<double> heights(d);
  for (double &h : heights) h = 1.0 - rng.next_double();  // (0, 1]
  std::sort(heights.begin(), heights.end());

  const int n_nodes = 2 * d;
  std::vector<int> parent(n_nodes, -1);
  std::vector<double> theta(n_nodes, 0.0);
  std::vector<double> node_height(n_nodes, 0.0);

  std::vector<int> active(d);
  for (int i = 0; i < d; ++i) active[i] = i + 1;
  int next_id = d + 1;
  for (int t = 0; t + 1 < d; ++t) {
    const std::size_t N = active.size();
    std::uint64_t k = rng.next_u64() % (N * (N - 1) / 2);
    std::size_t i = 0;
    while (k >= N - 1 - i) {
      k -= N - 1 - i;
      ++i;
    }
    const std::size_t j = i + 1 + k;
    const int u = next_id++;
    node_height[u] = heights[t];
    for (std::size_t pos : {i, j}) {
      const int c = active[pos];
      parent[c] = u;
      theta[c] = node_height[u] - node_height[c];
    }
    active[i] = u;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
  }
  // Root sits at the largest height; its single child is the last merge node.
  parent[active[0]] = 0;
  theta[active[0]] = heights[d - 1] - node_height[active[0]];

  TreeWithParams out;
  out.tree = make_tree(parent, d);
  validate(out.tree);
  out.theta = Eigen::Map<Vector>(theta.data(), n_nodes);
  return out;
}

EdgeParams normalize_operator_norm(const RootedTree &tree, const EdgeParams &theta,
                                   double target) {
  const Matrix sigma = build_covariance(tree, theta);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  if (lmax <= 0) throw ZeroCovariance("normalize_operator_norm: covariance is zero");
  return theta * (target / lmax);
}

Vector sample_bmtm(const RootedTree &tree, const EdgeParams &theta, Rng &rng) {
  const int n = tree.size();
  std::vector<double> w(n, 0.0);
  std::vector<int> stack = {0};
  std::vector<int> pre;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    pre.push_back(u);
    for (auto it = tree.children[u].rbegin(); it != tree.children[u].rend(); ++it)
      stack.push_back(*it);
  }
  for (int u : pre) {
    if (u == 0) continue;
    w[u] = w[tree.parent[u]] + std::sqrt(std::max(theta(u), 0.0)) * rng.next_normal();
  }
  Vector x(tree.n_leaves);
  for (int i = 1; i <= tree.n_leaves; ++i) x(i - 1) = w[i];
  return x;
}

const std::vector<std::string> &registered_estimators() {
  static const std::vector<std::string> names = {"bmtm",     "ddm", "upgma",    "nj",
                                                 "ls",       "ots", "mxshrink", "linshrink"};
  return names;
}

namespace {

// Evaluates the requested covariance estimates on one draw, sharing the tree
// MLE across the estimators derived from it.
struct Evaluator {
  const RootedTree &tree;
  const Vector &x;
  const Matrix &sigma_star;
  double beta_sq;

  bool have_mle = false;
  Matrix sigma_mle;

  const Matrix &mle_cov() {
    if (!have_mle) {
      sigma_mle = build_covariance(tree, mle(tree, x).theta);
      have_mle = true;
    }
    return sigma_mle;
  }

  Matrix run(const std::string &name) {
    if (name == "bmtm") return mle_cov();
    if (name == "ddm") {
      const DdmMleResult r = ddm_mle(x);
      Eigen::LLT<Matrix> llt(r.K);
      if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("ddm estimator: precision matrix not positive definite");
      return llt.solve(Matrix::Identity(r.K.rows(), r.K.cols()));
    }
    if (name == "upgma") return upgma(x).covariance;
    if (name == "nj") return neighbor_joining(x).covariance;
    if (name == "ls") return least_squares(tree, x).covariance;
    if (name == "ots") return mle_cov() / 3.0;
    if (name == "mxshrink") return mxshrink(mle_cov()).covariance;
    if (name == "linshrink") return linear_shrink(mle_cov(), sigma_star, beta_sq).covariance;
    throw Error("UnknownEstimator", "run_experiment: unknown estimator " + name);
  }
};

struct TrialOutcome {
  // values[name] = {risk, bias, variance}; NaN where the estimator failed.
  std::map<std::string, std::array<double, 3>> values;
  std::map<std::string, std::string> errors;
};

TrialOutcome run_trial(const ExperimentConfig &config, int d, int trial,
                       const std::vector<std::string> &names) {
  TrialOutcome out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto &n : names) out.values[n] = {nan, nan, nan};

  Rng rng_tree = make_rng(config.seed, d, trial, 0);
  TreeWithParams truth = random_ultrametric_tree(d, rng_tree);
  truth.theta = normalize_operator_norm(truth.tree, truth.theta, config.operator_norm_target);
  const Matrix sigma_star = build_covariance(truth.tree, truth.theta);

  double beta_sq = 0;
  const bool need_beta =
      std::find(names.begin(), names.end(), "linshrink") != names.end();
  if (need_beta) {
    Rng rng_beta = make_rng(config.seed, d, trial, 3);
    for (int r = 0; r < config.beta_sq_replicates; ++r) {
      const Vector xr = sample_bmtm(truth.tree, truth.theta, rng_beta);
      const Matrix sh = build_covariance(truth.tree, mle(truth.tree, xr).theta);
      beta_sq += (sh - sigma_star).squaredNorm();
    }
    beta_sq /= config.beta_sq_replicates;
  }

  auto guarded = [&](const std::string &name, Evaluator &ev, Matrix &dst) {
    if (out.errors.count(name)) return false;
    try {
      dst = ev.run(name);
      return true;
    } catch (const std::exception &e) {
      out.errors[name] = e.what();
      return false;
    }
  };

  {
    Rng rng_risk = make_rng(config.seed, d, trial, 1);
    const Vector x = sample_bmtm(truth.tree, truth.theta, rng_risk);
    Evaluator ev{truth.tree, x, sigma_star, beta_sq};
    for (const auto &name : names) {
      Matrix sh;
      if (guarded(name, ev, sh)) out.values[name][0] = (sh - sigma_star).squaredNorm();
    }
  }

  Rng rng_bias = make_rng(config.seed, d, trial, 2);
  std::map<std::string, std::vector<Matrix>> draws;
  for (int r = 0; r < config.bias_replicates; ++r) {
    const Vector x = sample_bmtm(truth.tree, truth.theta, rng_bias);
    Evaluator ev{truth.tree, x, sigma_star, beta_sq};
    for (const auto &name : names) {
      Matrix sh;
      if (guarded(name, ev, sh)) draws[name].push_back(sh);
    }
  }
  for (const auto &name : names) {
    const auto &mats = draws[name];
    if (mats.size() != static_cast<std::size_t>(config.bias_replicates)) continue;
    Matrix mean = Matrix::Zero(d, d);
    for (const auto &m : mats) mean += m;
    mean /= static_cast<double>(mats.size());
    double var = 0;
    for (const auto &m : mats) var += (m - mean).squaredNorm();
    out.values[name][1] = (mean - sigma_star).squaredNorm();
    out.values[name][2] = var / static_cast<double>(mats.size());
  }
  return out;
}

double percentile(std::vector<double> sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = p * (static_cast<double>(sorted.size()) - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1 - frac) + sorted[hi] * frac;
}

}  // namespace

RiskTable run_experiment(const ExperimentConfig &config) {
  if (config.trials < 1) throw TooSmall("run_experiment: trials must be >= 1");
  std::vector<std::string> names = config.estimators;
  if (names.empty()) names = registered_estimators();
  for (const auto &n : names)
    if (std::find(registered_estimators().begin(), registered_estimators().end(), n) ==
        registered_estimators().end())
      throw Error("UnknownEstimator", "run_experiment: unknown estimator " + n);
  for (int d : config.d_values)
    if (d < 2) throw TooSmall("run_experiment: d must be >= 2");

  RiskTable table;
  static const char *metrics[3] = {"risk", "bias", "variance"};
  for (int d : config.d_values) {
    std::vector<TrialOutcome> outcomes(config.trials);
    const int n_threads = std::max(1, config.threads);
    if (n_threads == 1) {
      for (int t = 0; t < config.trials; ++t) outcomes[t] = run_trial(config, d, t, names);
    } else {
      std::vector<std::thread> pool;
      std::atomic<int> next{0};
      for (int w = 0; w < n_threads; ++w)
        pool.emplace_back([&] {
          for (int t = next++; t < config.trials; t = next++)
            outcomes[t] = run_trial(config, d, t, names);
        });
      for (auto &th : pool) th.join();
    }
    // Ordered reduction over the trial index keeps results scheduling-independent.
    for (const auto &name : names) {
      for (int m = 0; m < 3; ++m) {
        RiskRow row;
        row.d = d;
        row.estimator = name;
        row.metric = metrics[m];
        row.seed = config.seed;
        std::vector<double> vals;
        for (int t = 0; t < config.trials; ++t) {
          const double v = outcomes[t].values.at(name)[m];
          if (std::isfinite(v)) vals.push_back(v);
          if (row.error.empty()) {
            auto it = outcomes[t].errors.find(name);
            if (it != outcomes[t].errors.end()) row.error = it->second;
          }
        }
        row.trials = static_cast<int>(vals.size());
        double sum = 0;
        for (double v : vals) sum += v;
        row.mean = vals.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : sum / static_cast<double>(vals.size());
        std::sort(vals.begin(), vals.end());
        row.p10 = percentile(vals, 0.10);
        row.p90 = percentile(vals, 0.90);
        table.rows.push_back(row);
      }
    }
  }
  return table;
}

std::string RiskTable::to_csv() const {
  std::string out = "d,estimator,metric,mean,p10,p90,trials,seed,error\n";
  char buf[512];
  for (const auto &r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    std::snprintf(buf, sizeof(buf), "%d,%s,%s,%.12g,%.12g,%.12g,%d,%llu,%s\n", r.d,
                  r.estimator.c_str(), r.metric.c_str(), r.mean, r.p10, r.p90, r.trials,
                  static_cast<unsigned long long>(r.seed), err.c_str());
    out += buf;
  }
  return out;
}

}  // namespace bmt

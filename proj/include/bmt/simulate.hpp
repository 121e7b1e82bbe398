#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bmt/tree.hpp"

namespace bmt {

// Counter-based splittable generator: every (seed, d, trial, purpose) tuple
// names an independent stream, so trials can run in any order or in parallel
// and still reproduce bit-identically.
class Rng {
 public:
  explicit Rng(std::uint64_t state) : state_(state) {}
  std::uint64_t next_u64();
  double next_double();  // uniform on [0, 1)
  double next_normal();  // standard normal, Box-Muller

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0;
};

Rng make_rng(std::uint64_t seed, std::uint64_t d, std::uint64_t trial, std::uint64_t purpose);

// Uniform pair-merging binary topology; the d sorted uniform heights provide
// the d-1 merge heights plus the root height. Ultrametric by construction.
TreeWithParams random_ultrametric_tree(int d, Rng &rng);

// Scales theta so the covariance operator norm equals target.
EdgeParams normalize_operator_norm(const RootedTree &tree, const EdgeParams &theta,
                                   double target);

// One draw by root-to-leaf accumulation of independent N(0, theta_i) steps.
Vector sample_bmtm(const RootedTree &tree, const EdgeParams &theta, Rng &rng);

struct ExperimentConfig {
  std::vector<int> d_values;
  int trials = 1000;
  std::uint64_t seed = 0;
  std::vector<std::string> estimators;  // empty = all registered
  int beta_sq_replicates = 100;         // linear-shrink oracle inner samples
  int bias_replicates = 50;             // inner draws for bias/variance
  double operator_norm_target = 1.0;
  int threads = 1;
};

struct RiskRow {
  int d = 0;
  std::string estimator;
  std::string metric;  // risk | bias | variance
  double mean = 0, p10 = 0, p90 = 0;
  int trials = 0;  // successful trials entering the aggregates
  std::uint64_t seed = 0;
  std::string error;  // first estimator failure, if any trial failed
};

struct RiskTable {
  std::vector<RiskRow> rows;
  std::string to_csv() const;
};

const std::vector<std::string> &registered_estimators();

RiskTable run_experiment(const ExperimentConfig &config);

}  // namespace bmt

// Command-line front end: exact and closed-form tree MLEs, comparison
// estimators, the simulation harness, and the self-check property suites.
//
// Exit codes: 0 success, 1 domain error (single-line JSON on stderr), 2 usage.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "bmt/contrast.hpp"
#include "bmt/ddm.hpp"
#include "bmt/estimators.hpp"
#include "bmt/likelihood.hpp"
#include "bmt/mle.hpp"
#include "bmt/simulate.hpp"
#include "bmt/tree.hpp"

using json = nlohmann::json;

namespace {

struct CommonArgs {
  std::string tree_file;
  std::string data_file;
  std::string data_inline;
  std::string out_file;
  std::string format = "json";
  std::uint64_t seed = 0;
  bool jitter = false;
};

void add_data_flags(CLI::App *cmd, CommonArgs &args) {
  auto *f = cmd->add_option("--data", args.data_file, "data vector file (one CSV row or line-separated)");
  auto *i = cmd->add_option("--data-inline", args.data_inline, "data vector as inline CSV");
  f->excludes(i);
}

std::vector<double> parse_numbers(const std::string &text) {
  std::vector<double> out;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    std::stringstream inner(token);
    double v;
    while (inner >> v) out.push_back(v);
  }
  return out;
}

bmt::Vector load_data(const CommonArgs &args) {
  std::string text;
  if (!args.data_inline.empty()) {
    text = args.data_inline;
  } else if (!args.data_file.empty()) {
    std::ifstream in(args.data_file);
    if (!in) throw bmt::Error("IoError", "cannot read " + args.data_file);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  } else {
    throw bmt::Error("UsageError", "one of --data / --data-inline is required");
  }
  const auto nums = parse_numbers(text);
  if (nums.empty()) throw bmt::Error("IoError", "empty data vector");
  bmt::Vector x(static_cast<int>(nums.size()));
  for (std::size_t k = 0; k < nums.size(); ++k) x(static_cast<int>(k)) = nums[k];
  if (args.jitter) {
    // Deterministic symmetry-breaking perturbation, 1e-9 of the data scale
    // per index step. Opt-in; the library itself rejects ties instead.
    const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
    for (int k = 0; k < x.size(); ++k) x(k) += 1e-9 * scale * (k + 1);
  }
  return x;
}

bmt::TreeWithParams load_tree(const CommonArgs &args) {
  if (args.tree_file.empty()) throw bmt::Error("UsageError", "--tree is required");
  std::ifstream in(args.tree_file);
  if (!in) throw bmt::Error("IoError", "cannot read " + args.tree_file);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (args.tree_file.size() > 5 && args.tree_file.substr(args.tree_file.size() - 5) == ".json")
    return bmt::tree_from_json(text);
  return bmt::parse_newick(text);
}

void write_output(const CommonArgs &args, const std::string &payload) {
  if (args.out_file.empty()) {
    std::cout << payload;
    if (!payload.empty() && payload.back() != '\n') std::cout << '\n';
    return;
  }
  const std::string tmp = args.out_file + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw bmt::Error("IoError", "cannot write " + tmp);
    out << payload;
  }
  std::filesystem::rename(tmp, args.out_file);
}

json vector_to_json(const bmt::Vector &v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json matrix_to_json(const bmt::Matrix &m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json mle_to_json(const bmt::MleResult &r) {
  json j;
  j["sparsity"] = json::array();
  for (int v : r.sparsity.zeroed) j["sparsity"].push_back(v);
  j["theta"] = vector_to_json(r.theta);
  j["objective"] = r.objective;
  j["objective_log"] = r.objective_log;
  j["loglik"] = r.loglik;
  j["tie_count"] = r.tie_count;
  return j;
}

int env_threads() {
  if (const char *env = std::getenv("BMTM_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

// ---- verify suites ---------------------------------------------------------

bmt::RootedTree random_topology(int d, bmt::Rng &rng) {
  // Uniform binary merge topology, then internal edges are randomly contracted
  // so the suite also covers multifurcating trees.
  if (d == 1) return bmt::make_tree({-1, 0}, 1);
  bmt::Rng r2(rng.next_u64());
  bmt::TreeWithParams t = bmt::random_ultrametric_tree(d, r2);
  if (d <= 2) return t.tree;
  std::vector<int> par = t.tree.parent;
  // Contract each internal-internal edge independently with probability 1/3.
  std::vector<int> remap(par.size());
  for (std::size_t i = 0; i < par.size(); ++i) remap[i] = static_cast<int>(i);
  for (std::size_t i = d + 1; i < par.size(); ++i) {
    if (par[i] > d && rng.next_double() < 1.0 / 3.0) remap[i] = par[i];
  }
  auto find = [&](int v) {
    while (remap[v] != v) v = remap[v];
    return v;
  };
  std::map<int, int> new_id;
  std::vector<int> new_parent;
  new_parent.reserve(par.size());
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
    const int p = find(par[v]);
    new_parent[new_id[v]] = new_id[p];
  }
  return bmt::make_tree(new_parent, d);
}

bmt::Vector random_gaussian(int d, bmt::Rng &rng) {
  bmt::Vector x(d);
  for (int i = 0; i < d; ++i) x(i) = rng.next_normal();
  return x;
}

int suite_oracle(int instances, std::uint64_t seed) {
  int failures = 0, total = 0;
  for (int d = 2; d <= 8; ++d) {
    for (int t = 0; t < instances; ++t) {
      bmt::Rng rng = bmt::make_rng(seed, d, t, 100);
      const bmt::RootedTree tree = random_topology(d, rng);
      const bmt::Vector x = random_gaussian(d, rng);
      const bmt::MleResult fast = bmt::mle(tree, x);
      const bmt::MleResult slow = bmt::brute_force_mle(tree, x);
      ++total;
      const bool obj_ok = std::abs(fast.objective_log - slow.objective_log) <=
                          1e-9 * std::max(1.0, std::abs(slow.objective_log));
      const bool sp_ok = fast.tie_count != 1 || fast.sparsity == slow.sparsity;
      if (!obj_ok || !sp_ok) {
        ++failures;
        std::cerr << "oracle failure: d=" << d << " trial=" << t << " x=[";
        for (int i = 0; i < d; ++i) std::cerr << (i ? "," : "") << x(i);
        std::cerr << "] fast=" << fast.objective_log << " slow=" << slow.objective_log
                  << "\n";
      }
    }
  }
  std::cout << "oracle: " << (total - failures) << "/" << total << " pass\n";
  return failures == 0 ? 0 : 1;
}

int suite_kkt(int instances, std::uint64_t seed) {
  int failures = 0, total = 0;
  for (int t = 0; t < instances; ++t) {
    const int d = 2 + static_cast<int>(t % 5);
    bmt::Rng rng = bmt::make_rng(seed, d, t, 101);
    const bmt::Vector x = random_gaussian(d, rng);
    ++total;
    try {
      const bmt::DdmMleResult r = bmt::ddm_mle(x);
      if (!bmt::verify_kkt(r.P, x).pass) ++failures;
    } catch (const bmt::Error &e) {
      std::cerr << "kkt failure: trial=" << t << " " << e.what() << "\n";
      ++failures;
    }
  }
  std::cout << "kkt: " << (total - failures) << "/" << total << " pass\n";
  return failures == 0 ? 0 : 1;
}

int suite_curvature(int instances, std::uint64_t seed) {
  int failures = 0, total = 0;
  for (int t = 0; t < instances; ++t) {
    const int d = 2 + static_cast<int>(t % 5);
    bmt::Rng rng = bmt::make_rng(seed, d, t, 102);
    bmt::TreeWithParams truth = bmt::random_ultrametric_tree(d, rng);
    const bmt::Matrix sigma = bmt::build_covariance(truth.tree, truth.theta);
    bmt::Vector x;
    Eigen::LLT<bmt::Matrix> llt(sigma);
    do {
      x = bmt::sample_bmtm(truth.tree, truth.theta, rng);
    } while (x.dot(llt.solve(x)) <= 0.5);
    ++total;
    try {
      const bmt::Matrix B =
          llt.solve((2 * x * x.transpose() - sigma).transpose()).transpose();
      const bmt::Matrix Bsym = llt.solve(B);
      const bmt::DirectionMatrix dir =
          bmt::negative_curvature_direction(0.5 * (Bsym + Bsym.transpose()));
      const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
      if (bmt::second_directional_derivative(sigma, dir.A, x) <= 1e-10 * scale) ++failures;
    } catch (const bmt::Error &e) {
      std::cerr << "curvature failure: trial=" << t << " " << e.what() << "\n";
      ++failures;
    }
  }
  std::cout << "curvature: " << (total - failures) << "/" << total << " pass\n";
  return failures == 0 ? 0 : 1;
}

int suite_roundtrip(int instances, std::uint64_t seed) {
  int failures = 0, total = 0;
  for (int t = 0; t < instances; ++t) {
    const int d = 2 + static_cast<int>(t % 5);
    bmt::Rng rng = bmt::make_rng(seed, d, t, 103);
    ++total;
    try {
      // DDM -> Laplacian -> DDM.
      bmt::Matrix K = bmt::Matrix::Zero(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
          K(i, j) = -rng.next_double();
          K(j, i) = K(i, j);
        }
      for (int i = 0; i < d; ++i)
        K(i, i) = -K.row(i).sum() + K(i, i) + rng.next_double() + 0.1;
      const bmt::Matrix back = bmt::laplacian_restrict(bmt::laplacian_embed(K));
      if ((back - K).cwiseAbs().maxCoeff() > 0) ++failures;
      // Fiedler round trip.
      const bmt::Matrix K2 = bmt::fiedler_inverse(bmt::fiedler(K));
      if ((K2 - K).cwiseAbs().maxCoeff() > 1e-12) ++failures;
      // Tree text round trips. Newick assigns latent ids in parse order, so
      // the comparison is the serialized text plus the leaf covariance, both
      // invariant under latent relabeling. JSON preserves ids exactly.
      bmt::TreeWithParams tp = bmt::random_ultrametric_tree(d, rng);
      const std::string nwk = bmt::to_newick(tp.tree, tp.theta);
      const bmt::TreeWithParams tp2 = bmt::parse_newick(nwk);
      const bmt::TreeWithParams tp3 =
          bmt::tree_from_json(bmt::tree_to_json(tp.tree, tp.theta));
      const bmt::Matrix cov = bmt::build_covariance(tp.tree, tp.theta);
      if (bmt::to_newick(tp2.tree, tp2.theta) != nwk ||
          (bmt::build_covariance(tp2.tree, tp2.theta) - cov).cwiseAbs().maxCoeff() > 0)
        ++failures;
      else if (tp3.tree.parent != tp.tree.parent ||
               (tp3.theta - tp.theta).cwiseAbs().maxCoeff() > 0)
        ++failures;
    } catch (const bmt::Error &e) {
      std::cerr << "roundtrip failure: trial=" << t << " " << e.what() << "\n";
      ++failures;
    }
  }
  std::cout << "roundtrip: " << (total - failures) << "/" << total << " pass\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Brownian motion tree model estimation toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string method = "upgma";
  std::string suite = "all";
  int instances = 50;
  std::vector<int> d_values = {4};
  int trials = 100;
  std::string estimators_csv;
  std::string epsilons_csv = "1,0.1,0.01,0.001,0.0001,1e-05,1e-06";

  auto *c_mle = app.add_subcommand("mle", "exact MLE on a fixed tree");
  c_mle->add_option("--tree", args.tree_file, "tree file (Newick, or .json)")->required();
  add_data_flags(c_mle, args);

  auto *c_ddm = app.add_subcommand("ddm-mle", "closed-form MLE over diagonally dominant M-matrices");
  add_data_flags(c_ddm, args);

  auto *c_est = app.add_subcommand("estimate", "comparison covariance estimators");
  c_est->add_option("--method", method, "upgma | nj | ls | ots | mxshrink")->required();
  c_est->add_option("--tree", args.tree_file, "tree file (ls/ots/mxshrink)");
  add_data_flags(c_est, args);

  auto *c_con = app.add_subcommand("contrast-mle", "MLE of the pairwise-difference model");
  c_con->add_option("--tree", args.tree_file, "tree file")->required();
  add_data_flags(c_con, args);

  auto *c_plgtm = app.add_subcommand("plgtm-witness", "likelihood divergence with duplicated data");
  add_data_flags(c_plgtm, args);
  c_plgtm->add_option("--epsilons", epsilons_csv, "decreasing positive CSV of variances");

  auto *c_sim = app.add_subcommand("simulate", "Monte Carlo risk experiment");
  c_sim->add_option("--d-values", d_values, "leaf counts");
  c_sim->add_option("--trials", trials, "trials per leaf count");
  c_sim->add_option("--estimators", estimators_csv, "CSV subset of registered estimators");
  c_sim->add_option("--seed", args.seed, "experiment seed");

  auto *c_ver = app.add_subcommand("verify", "property suites");
  c_ver->add_option("--suite", suite, "oracle | kkt | curvature | roundtrip | all");
  c_ver->add_option("--instances", instances, "instances per suite");
  c_ver->add_option("--seed", args.seed, "suite seed");

  for (auto *c : {c_mle, c_ddm, c_est, c_con, c_plgtm, c_sim}) {
    c->add_option("--out", args.out_file, "output file (written atomically)");
    c->add_option("--format", args.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
    c->add_flag("--jitter", args.jitter, "perturb data by 1e-9 x scale to break ties");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_mle->parsed()) {
      const bmt::TreeWithParams tp = load_tree(args);
      const bmt::Vector x = load_data(args);
      write_output(args, mle_to_json(bmt::mle(tp.tree, x)).dump(2));
    } else if (c_ddm->parsed()) {
      const bmt::Vector x = load_data(args);
      const bmt::DdmMleResult r = bmt::ddm_mle(x);
      const bmt::TreeWithParams tp = bmt::ddm_mle_tree(x);
      json j;
      j["P"] = matrix_to_json(r.P);
      j["K"] = matrix_to_json(r.K);
      j["newick"] = bmt::to_newick(tp.tree, tp.theta);
      write_output(args, j.dump(2));
    } else if (c_est->parsed()) {
      const bmt::Vector x = load_data(args);
      bmt::EstimatorOutput out;
      if (method == "upgma") {
        out = bmt::upgma(x);
      } else if (method == "nj") {
        out = bmt::neighbor_joining(x);
      } else if (method == "ls") {
        out = bmt::least_squares(load_tree(args).tree, x);
      } else if (method == "ots") {
        const bmt::TreeWithParams tp = load_tree(args);
        const bmt::MleResult r = bmt::mle(tp.tree, x);
        out.tree = bmt::TreeWithParams{tp.tree, bmt::one_third_shrink(r.theta)};
        out.covariance = bmt::build_covariance(tp.tree, out.tree->theta);
      } else if (method == "mxshrink") {
        const bmt::TreeWithParams tp = load_tree(args);
        const bmt::MleResult r = bmt::mle(tp.tree, x);
        out = bmt::mxshrink(bmt::build_covariance(tp.tree, r.theta));
      } else {
        throw bmt::Error("UsageError", "unknown method " + method);
      }
      json j;
      j["method"] = method;
      j["covariance"] = matrix_to_json(out.covariance);
      j["clamped"] = out.clamped;
      if (out.tree) j["newick"] = bmt::to_newick(out.tree->tree, out.tree->theta);
      write_output(args, j.dump(2));
    } else if (c_con->parsed()) {
      const bmt::TreeWithParams tp = load_tree(args);
      const bmt::Vector x = load_data(args);
      const bmt::ContrastResult r = bmt::contrast_mle(tp.tree, x);
      json j;
      j["y"] = vector_to_json(r.transformed_data);
      j["newick_rerooted"] = bmt::to_newick(r.rerooted.tree, r.mle.theta);
      j["mle"] = mle_to_json(r.mle);
      write_output(args, j.dump(2));
    } else if (c_plgtm->parsed()) {
      const bmt::Vector x = load_data(args);
      std::vector<double> eps = parse_numbers(epsilons_csv);
      json j = json::array();
      for (const auto &[e, ll] : bmt::plgtm_divergence_witness(x, eps))
        j.push_back({{"epsilon", e}, {"loglik", ll}});
      write_output(args, j.dump(2));
    } else if (c_sim->parsed()) {
      bmt::ExperimentConfig config;
      config.d_values = d_values;
      config.trials = trials;
      config.seed = args.seed;
      config.threads = env_threads();
      if (!estimators_csv.empty()) {
        std::stringstream ss(estimators_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) config.estimators.push_back(tok);
      }
      const bmt::RiskTable table = bmt::run_experiment(config);
      if (args.format == "json") {
        json j = json::array();
        for (const auto &r : table.rows)
          j.push_back({{"d", r.d},
                       {"estimator", r.estimator},
                       {"metric", r.metric},
                       {"mean", r.mean},
                       {"p10", r.p10},
                       {"p90", r.p90},
                       {"trials", r.trials},
                       {"seed", r.seed},
                       {"error", r.error}});
        write_output(args, j.dump(2));
      } else {
        write_output(args, table.to_csv());
      }
    } else if (c_ver->parsed()) {
      int rc = 0;
      if (suite == "oracle" || suite == "all") rc |= suite_oracle(instances, args.seed);
      if (suite == "kkt" || suite == "all") rc |= suite_kkt(instances, args.seed);
      if (suite == "curvature" || suite == "all") rc |= suite_curvature(instances, args.seed);
      if (suite == "roundtrip" || suite == "all") rc |= suite_roundtrip(instances, args.seed);
      if (suite != "oracle" && suite != "kkt" && suite != "curvature" &&
          suite != "roundtrip" && suite != "all")
        throw bmt::Error("UsageError", "unknown suite " + suite);
      return rc;
    }
  } catch (const bmt::Error &e) {
    json err = {{"error", e.code()}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception &e) {
    json err = {{"error", "Internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}

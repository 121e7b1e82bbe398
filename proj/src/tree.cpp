#include "bmt/tree.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bmt {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RootedTree make_tree(std::vector<int> parent, int n_leaves) {
  RootedTree t;
  t.parent = std::move(parent);
  t.n_leaves = n_leaves;
  t.children.assign(t.parent.size(), {});
  for (int i = 1; i < t.size(); ++i) {
    if (t.parent[i] < 0 || t.parent[i] >= t.size())
      throw InvalidTree("node " + std::to_string(i) + " has parent out of range");
    t.children[t.parent[i]].push_back(i);
  }
  return t;
}

void validate(const RootedTree &tree) {
  const int n = tree.size();
  if (n < 2) throw InvalidTree("tree must contain the root and at least one leaf");
  if (tree.parent[0] != -1) throw InvalidTree("root must have no parent");
  if (tree.children[0].size() != 1)
    throw DegreeViolation("root must have degree exactly 1");
  // Every node must reach the root through its parent chain.
  for (int i = 1; i < n; ++i) {
    int steps = 0, v = i;
    while (v != 0) {
      v = tree.parent[v];
      if (v < 0 || ++steps > n) throw CycleDetected("parent chain from node " + std::to_string(i) + " does not reach the root");
    }
  }
  for (int i = 1; i < n; ++i) {
    const int deg = static_cast<int>(tree.children[i].size()) + 1;
    if (tree.is_leaf(i)) {
      if (deg != 1) throw DegreeViolation("leaf " + std::to_string(i) + " has children");
    } else {
      if (deg < 3) throw DegreeViolation("internal node " + std::to_string(i) + " has degree " + std::to_string(deg));
    }
  }
}

std::vector<int> descendant_leaves(const RootedTree &tree, int node) {
  if (node < 0 || node >= tree.size())
    throw UnknownNode("node " + std::to_string(node) + " not in tree");
  std::vector<int> out, stack{node};
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    if (tree.is_leaf(v)) out.push_back(v);
    for (int c : tree.children[v]) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Matrix build_covariance(const RootedTree &tree, const EdgeParams &theta) {
  const int d = tree.n_leaves;
  if (theta.size() != tree.size())
    throw InvalidTree("theta dimension does not match tree");
  Matrix sigma = Matrix::Zero(d, d);
  for (int i = 1; i < tree.size(); ++i) {
    if (theta(i) < 0) throw InvalidTree("negative edge variance at node " + std::to_string(i));
    if (theta(i) == 0) continue;
    const auto de = descendant_leaves(tree, i);
    for (int a : de)
      for (int b : de) sigma(a - 1, b - 1) += theta(i);
  }
  return sigma;
}

ContractedTree contract_set(const RootedTree &tree, const SparsityStructure &sparsity) {
  const int n = tree.size();
  for (int z : sparsity.zeroed)
    if (z <= 0 || z >= n)
      throw InvalidSparsity("zeroed node " + std::to_string(z) + " not a non-root tree node");

  // Union-find keeping the smallest node under the determined-first order as
  // representative; order independence follows.
  std::vector<int> rep(n);
  for (int i = 0; i < n; ++i) rep[i] = i;
  std::function<int(int)> find = [&](int v) {
    while (rep[v] != v) v = rep[v] = rep[rep[v]];
    return v;
  };
  auto rank = [&](int v) {
    // Determined nodes sort before latent ones.
    return tree.is_determined(v) ? v : v + n;
  };
  for (int z : sparsity.zeroed) {
    int a = find(tree.parent[z]), b = find(z);
    if (a == b) continue;
    if (rank(a) > rank(b)) std::swap(a, b);
    rep[b] = a;
  }
  ContractedTree out;
  out.rep.resize(n);
  for (int i = 0; i < n; ++i) out.rep[i] = find(i);
  for (int c = 1; c < n; ++c) {
    if (sparsity.zeroed.count(c)) continue;
    out.edges.push_back({out.rep[tree.parent[c]], out.rep[c], c});
  }
  return out;
}

bool is_fully_observed(const RootedTree &tree, const SparsityStructure &sparsity) {
  const ContractedTree ct = contract_set(tree, sparsity);
  // Every zero-edge component must contain exactly one determined node.
  std::map<int, int> determined_per_comp;
  for (int i = 0; i < tree.size(); ++i) {
    determined_per_comp.try_emplace(ct.rep[i], 0);
    if (tree.is_determined(i)) ++determined_per_comp[ct.rep[i]];
  }
  for (const auto &[comp, count] : determined_per_comp)
    if (count != 1) return false;
  return true;
}

namespace {

using Patterns = std::vector<std::vector<int>>;

Patterns cross(const Patterns &a, const Patterns &b) {
  Patterns out;
  out.reserve(a.size() * b.size());
  for (const auto &pa : a)
    for (const auto &pb : b) {
      std::vector<int> merged = pa;
      merged.insert(merged.end(), pb.begin(), pb.end());
      out.push_back(std::move(merged));
    }
  return out;
}

// Enumerates zero-edge patterns of the subtree at `node` given the determined
// label of the parent's component. A latent node either joins the parent's
// component (zero edge) or takes the value of a leaf in its own subtree.
Patterns enumerate_rec(const RootedTree &tree, const std::vector<std::vector<int>> &sub_leaves,
                       int node, int label) {
  if (tree.is_leaf(node)) {
    if (label == node) return {{node}};
    return {{}};
  }
  const auto &leaves = sub_leaves[node];
  const bool label_inside = std::binary_search(leaves.begin(), leaves.end(), label);

  auto with_value = [&](int value, bool zero_edge) {
    Patterns acc = {zero_edge ? std::vector<int>{node} : std::vector<int>{}};
    for (int c : tree.children[node])
      acc = cross(acc, enumerate_rec(tree, sub_leaves, c, value));
    return acc;
  };

  Patterns out = with_value(label, /*zero_edge=*/true);
  if (!label_inside) {
    for (int m : leaves) {
      Patterns more = with_value(m, /*zero_edge=*/false);
      out.insert(out.end(), more.begin(), more.end());
    }
  }
  return out;
}

}  // namespace

std::vector<SparsityStructure> enumerate_fully_observed(const RootedTree &tree, int leaf_cap) {
  validate(tree);
  if (tree.n_leaves > leaf_cap)
    throw TooLarge("enumerate_fully_observed: " + std::to_string(tree.n_leaves) +
                   " leaves exceeds cap " + std::to_string(leaf_cap));
  std::vector<std::vector<int>> sub_leaves(tree.size());
  for (int i = 0; i < tree.size(); ++i) sub_leaves[i] = descendant_leaves(tree, i);

  const int root_child = tree.children[0][0];
  Patterns patterns = enumerate_rec(tree, sub_leaves, root_child, 0);
  std::set<SparsityStructure> dedup;
  for (auto &p : patterns) {
    SparsityStructure s;
    s.zeroed.insert(p.begin(), p.end());
    dedup.insert(std::move(s));
  }
  return {dedup.begin(), dedup.end()};
}

RerootedTree reroot_at_leaf(const RootedTree &tree, int leaf) {
  validate(tree);
  if (!tree.is_leaf(leaf)) throw UnknownLeaf("node " + std::to_string(leaf) + " is not a leaf");

  const int n = tree.size();
  // Undirected adjacency over all nodes except the original root.
  std::vector<std::vector<int>> adj(n);
  for (int c = 1; c < n; ++c) {
    int p = tree.parent[c];
    if (p == 0) continue;  // the root and its edge are removed
    adj[p].push_back(c);
    adj[c].push_back(p);
  }

  // Orient away from the new root; collect each node's merged original edges
  // while suppressing degree-2 chains.
  struct NewNode {
    int old_id;
    int new_parent;  // index into `nodes`
    std::vector<int> merged;
  };
  std::vector<NewNode> nodes;
  nodes.push_back({leaf, -1, {}});

  std::function<void(int, int, int, std::vector<int>)> descend =
      [&](int v, int from, int parent_new, std::vector<int> pending) {
        // The original edge between `from` and `v` is the one indexed by
        // whichever of the two is the child in the rooted tree.
        pending.push_back(tree.parent[v] == from ? v : from);
        std::vector<int> next;
        for (int w : adj[v])
          if (w != from) next.push_back(w);
        if (next.size() == 1 && !tree.is_leaf(v)) {
          // Degree-2 node in the rerooted tree: suppress it.
          descend(next[0], v, parent_new, std::move(pending));
          return;
        }
        const int me = static_cast<int>(nodes.size());
        nodes.push_back({v, parent_new, std::move(pending)});
        for (int w : next) descend(w, v, me, {});
      };
  for (int w : adj[leaf]) descend(w, leaf, 0, {});

  // Relabel: new root 0; leaves keep their original relative order; latent
  // nodes follow.
  const int d_new = tree.n_leaves - 1;
  std::vector<int> new_id(nodes.size(), -1);
  new_id[0] = 0;
  std::vector<std::pair<int, int>> old_leaves;  // (old id, node index)
  for (std::size_t k = 1; k < nodes.size(); ++k)
    if (tree.is_leaf(nodes[k].old_id)) old_leaves.push_back({nodes[k].old_id, (int)k});
  std::sort(old_leaves.begin(), old_leaves.end());
  RerootedTree out;
  out.new_leaf_to_old.assign(d_new + 1, -1);
  int next_label = 1;
  for (auto &[old_id, k] : old_leaves) {
    new_id[k] = next_label;
    out.new_leaf_to_old[next_label] = old_id;
    ++next_label;
  }
  for (std::size_t k = 1; k < nodes.size(); ++k)
    if (new_id[k] < 0) new_id[k] = next_label++;

  std::vector<int> parent(nodes.size(), -1);
  out.merged.assign(nodes.size(), {});
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    parent[new_id[k]] = new_id[nodes[k].new_parent];
    out.merged[new_id[k]] = nodes[k].merged;
  }
  out.tree = make_tree(std::move(parent), d_new);
  validate(out.tree);
  return out;
}

EdgeParams map_params_through_reroot(const RerootedTree &rr, const EdgeParams &theta) {
  EdgeParams out = EdgeParams::Zero(rr.tree.size());
  for (int i = 1; i < rr.tree.size(); ++i)
    for (int orig : rr.merged[i]) out(i) += theta(orig);
  return out;
}

// --- Newick ------------------------------------------------------------

namespace {

struct NewickParser {
  const std::string &text;
  std::size_t pos = 0;

  struct Node {
    int label = -1;  // -1 for unlabeled internal nodes
    double length = 0;
    std::vector<Node> children;
  };

  explicit NewickParser(const std::string &t) : text(t) {}

  [[noreturn]] void fail(const std::string &msg) { throw ParseError(pos, msg); }

  char peek() {
    if (pos >= text.size()) fail("unexpected end of input");
    return text[pos];
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos;
  }

  Node parse_node() {
    Node node;
    if (peek() == '(') {
      ++pos;
      node.children.push_back(parse_node());
      while (peek() == ',') {
        ++pos;
        node.children.push_back(parse_node());
      }
      expect(')');
    }
    // Optional integer label.
    std::size_t start = pos;
    while (pos < text.size() && (std::isdigit((unsigned char)text[pos]) || text[pos] == '-'))
      ++pos;
    if (pos > start) node.label = std::stoi(text.substr(start, pos - start));
    else if (node.children.empty()) fail("leaf without a label");
    expect(':');
    start = pos;
    while (pos < text.size() &&
           (std::isdigit((unsigned char)text[pos]) || strchr("+-.eE", text[pos])))
      ++pos;
    if (pos == start) fail("missing branch length");
    try {
      node.length = std::stod(text.substr(start, pos - start));
    } catch (const std::exception &) {
      fail("bad branch length");
    }
    return node;
  }

  Node parse() {
    Node root = parse_node();
    expect(';');
    while (pos < text.size()) {
      if (!std::isspace((unsigned char)text[pos])) fail("trailing characters");
      ++pos;
    }
    return root;
  }
};

}  // namespace

TreeWithParams parse_newick(const std::string &text) {
  NewickParser parser(text);
  NewickParser::Node outer = parser.parse();
  if (outer.label != 0) throw ParseError(0, "outermost node must be labeled 0");
  if (outer.children.empty()) throw ParseError(0, "outermost node must have children");

  // The outermost node is the root's child; a singleton chain below the root
  // is suppressed with its branch lengths summed.
  while (outer.children.size() == 1) {
    NewickParser::Node child = std::move(outer.children[0]);
    child.length += outer.length;
    outer = std::move(child);
  }

  // Collect leaves (labeled) and assign latent labels in parse order.
  std::vector<int> leaf_labels;
  std::function<void(const NewickParser::Node &)> scan = [&](const NewickParser::Node &nd) {
    if (nd.children.empty()) leaf_labels.push_back(nd.label);
    for (const auto &c : nd.children) scan(c);
  };
  scan(outer);
  const int d = static_cast<int>(leaf_labels.size());
  std::vector<int> sorted_labels = leaf_labels;
  std::sort(sorted_labels.begin(), sorted_labels.end());
  for (int i = 0; i < d; ++i)
    if (sorted_labels[i] != i + 1)
      throw ParseError(0, "leaf labels must be exactly 1..d");

  const int n_upper = 2 * d + 2;
  std::vector<int> parent(1, -1);
  parent.reserve(n_upper);
  std::vector<double> theta(1, 0.0);
  int next_latent = d + 1;
  // Pre-size for leaves.
  parent.resize(d + 1, -2);
  theta.resize(d + 1, 0.0);

  std::function<void(const NewickParser::Node &, int)> build =
      [&](const NewickParser::Node &nd, int par) {
        int id;
        if (nd.children.empty()) {
          id = nd.label;
        } else {
          id = next_latent++;
          parent.resize(std::max<std::size_t>(parent.size(), id + 1), -2);
          theta.resize(std::max<std::size_t>(theta.size(), id + 1), 0.0);
        }
        parent[id] = par;
        theta[id] = nd.length;
        for (const auto &c : nd.children) build(c, id);
      };
  build(outer, 0);

  TreeWithParams out;
  out.tree = make_tree(std::move(parent), d);
  validate(out.tree);
  out.theta = Eigen::Map<Vector>(theta.data(), theta.size());
  return out;
}

std::string to_newick(const RootedTree &tree, const EdgeParams &theta) {
  std::function<std::string(int)> render = [&](int node) {
    std::string s;
    if (!tree.is_leaf(node)) {
      s += '(';
      bool first = true;
      for (int c : tree.children[node]) {
        if (!first) s += ',';
        first = false;
        s += render(c);
      }
      s += ')';
      if (tree.parent[node] == 0) s += '0';
    } else {
      s += std::to_string(node);
    }
    s += ':';
    s += format_double(theta(node));
    return s;
  };
  const int root_child = tree.children[0][0];
  if (tree.is_leaf(root_child)) {
    // d = 1: wrap the single leaf so the outermost node carries label 0.
    return "(" + std::to_string(root_child) + ":" + format_double(theta(root_child)) +
           ")0:0;";
  }
  return render(root_child) + ";";
}

TreeWithParams tree_from_json(const std::string &text) {
  nlohmann::json j = nlohmann::json::parse(text);
  std::vector<int> parent = j.at("parent").get<std::vector<int>>();
  std::vector<double> theta = j.at("theta").get<std::vector<double>>();
  std::vector<int> leaves = j.at("leaves").get<std::vector<int>>();
  if (parent.size() != theta.size())
    throw InvalidTree("parent and theta lengths differ");
  for (std::size_t i = 0; i < leaves.size(); ++i)
    if (leaves[i] != static_cast<int>(i) + 1)
      throw InvalidTree("leaves must be 1..d");
  TreeWithParams out;
  out.tree = make_tree(std::move(parent), static_cast<int>(leaves.size()));
  validate(out.tree);
  out.theta = Eigen::Map<Vector>(theta.data(), theta.size());
  return out;
}

std::string tree_to_json(const RootedTree &tree, const EdgeParams &theta) {
  nlohmann::json j;
  j["parent"] = tree.parent;
  std::vector<double> th(theta.data(), theta.data() + theta.size());
  j["theta"] = th;
  std::vector<int> leaves(tree.n_leaves);
  for (int i = 0; i < tree.n_leaves; ++i) leaves[i] = i + 1;
  j["leaves"] = leaves;
  return j.dump();
}

Vector augment_data(const Vector &x) {
  Vector xa(x.size() + 1);
  xa(0) = 0;
  xa.tail(x.size()) = x;
  return xa;
}

void require_distinct_nonzero(const Vector &x) {
  for (int i = 0; i < x.size(); ++i) {
    if (x(i) == 0) throw ZeroValue("data entry " + std::to_string(i + 1) + " is zero");
    for (int j = i + 1; j < x.size(); ++j)
      if (x(i) == x(j))
        throw DuplicateValue("data entries " + std::to_string(i + 1) + " and " +
                             std::to_string(j + 1) + " are equal");
  }
}

}  // namespace bmt

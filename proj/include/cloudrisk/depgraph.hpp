#pragma once

// AND/OR dependency graphs with per-demand leaf "probability up".
//
// File form: {"nodes": {"C": {"leaf": 0.9}, "A": {"and": ["a", "C"]},
//                       "app": {"or": ["A", "B"]}}, "root": "app"}

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cloudrisk/errors.hpp"
#include "cloudrisk/rng.hpp"
#include "cloudrisk/scenario_config.hpp"

namespace cloudrisk::depgraph {

enum class NodeKind { Leaf, And, Or };

struct Node {
  NodeKind kind = NodeKind::Leaf;
  double p_up = 1.0;
  std::vector<std::string> children;
};

/// Largest leaf count reliability_exact will enumerate.
inline constexpr std::size_t kMaxExactLeaves = 24;

class DepGraph {
 public:
  DepGraph(std::map<std::string, Node> nodes, std::string root) : nodes_(std::move(nodes)), root_(std::move(root)) {
    if (!nodes_.contains(root_)) throw ConfigError("graph: root '" + root_ + "' is not a node");
    for (const auto& [id, n] : nodes_) {
      if (n.kind == NodeKind::Leaf) {
        if (!(n.p_up >= 0.0 && n.p_up <= 1.0)) throw ConfigError("graph: leaf '" + id + "' probability outside [0,1]");
        continue;
      }
      if (n.children.empty()) throw ConfigError("graph: gate '" + id + "' has no children");
      for (const auto& c : n.children) {
        if (!nodes_.contains(c)) throw ConfigError("graph: '" + id + "' references unknown node '" + c + "'");
      }
    }
    order_nodes();
  }

  static DepGraph parse(const nlohmann::json& j) {
    scenarios::detail::allow_keys(j, {"nodes", "root", "description"}, "graph");
    if (!j.contains("nodes") || !j["nodes"].is_object()) throw ConfigError("graph: 'nodes' must be an object");
    std::map<std::string, Node> nodes;
    for (const auto& [id, spec] : j["nodes"].items()) {
      if (!spec.is_object() || spec.size() != 1) {
        throw ConfigError("graph: node '" + id + "' must have exactly one of leaf, and, or");
      }
      const auto first = spec.begin();
      const std::string key = first.key();
      const auto& value = first.value();
      Node n;
      if (key == "leaf") {
        if (!value.is_number()) throw ConfigError("graph: leaf '" + id + "' needs a number");
        n.p_up = value.get<double>();
      } else if (key == "and" || key == "or") {
        n.kind = key == "and" ? NodeKind::And : NodeKind::Or;
        if (!value.is_array()) throw ConfigError("graph: children of '" + id + "' must be an array");
        for (const auto& c : value) {
          if (!c.is_string()) throw ConfigError("graph: children of '" + id + "' must be node ids");
          n.children.push_back(c.get<std::string>());
        }
      } else {
        throw ConfigError("graph: node '" + id + "' has unsupported gate '" + key +
                          "' (only leaf, and, or; k-of-n gates are not modeled)");
      }
      nodes.emplace(id, std::move(n));
    }
    return DepGraph(std::move(nodes), scenarios::detail::get_string(j, "root", "graph"));
  }

  static DepGraph parse_text(std::string_view text) { return parse(scenarios::detail::parse_json_text(text, "graph")); }
  static DepGraph load(const std::string& path) { return parse_text(scenarios::read_file(path)); }

  const std::string& root() const noexcept { return root_; }
  const std::map<std::string, Node>& nodes() const noexcept { return nodes_; }
  const Node& node(const std::string& id) const { return nodes_.at(id); }

  /// Leaves reachable from the root, sorted by id.
  const std::vector<std::string>& leaves() const noexcept { return leaves_; }

  /// Reachable nodes, children before parents.
  const std::vector<std::string>& topo_order() const noexcept { return order_; }

 private:
  void order_nodes() {
    enum class Mark { None, Active, Done };
    std::map<std::string, Mark> mark;
    std::function<void(const std::string&)> visit = [&](const std::string& id) {
      auto& m = mark[id];
      if (m == Mark::Done) return;
      if (m == Mark::Active) throw ConfigError("graph: cycle through '" + id + "'");
      m = Mark::Active;
      for (const auto& c : nodes_.at(id).children) visit(c);
      mark[id] = Mark::Done;
      order_.push_back(id);
      if (nodes_.at(id).kind == NodeKind::Leaf) leaves_.push_back(id);
    };
    visit(root_);
    // Nodes not under the root are still checked for cycles.
    for (const auto& [id, n] : nodes_) visit(id);
    order_.erase(std::remove_if(order_.begin(), order_.end(), [&](const std::string& id) {
      return !reachable(id);
    }), order_.end());
    leaves_.erase(std::remove_if(leaves_.begin(), leaves_.end(), [&](const std::string& id) {
      return !reachable(id);
    }), leaves_.end());
    std::sort(leaves_.begin(), leaves_.end());
  }

  bool reachable(const std::string& id) {
    if (reachable_.empty()) {
      std::vector<std::string> stack{root_};
      while (!stack.empty()) {
        auto cur = stack.back();
        stack.pop_back();
        if (!reachable_.insert(cur).second) continue;
        for (const auto& c : nodes_.at(cur).children) stack.push_back(c);
      }
    }
    return reachable_.contains(id);
  }

  std::map<std::string, Node> nodes_;
  std::string root_;
  std::vector<std::string> order_;
  std::vector<std::string> leaves_;
  std::set<std::string> reachable_;
};

namespace detail {

/// Index form for fast repeated evaluation: leaf i reads bit i of the state.
struct Compiled {
  struct Op {
    NodeKind kind;
    std::size_t leaf = 0;
    std::vector<std::size_t> children;
  };
  std::vector<Op> ops;  // topological; root last

  explicit Compiled(const DepGraph& g) {
    std::map<std::string, std::size_t> index, leaf_index;
    for (std::size_t i = 0; i < g.leaves().size(); ++i) leaf_index[g.leaves()[i]] = i;
    for (const auto& id : g.topo_order()) {
      const Node& n = g.node(id);
      Op op{n.kind, 0, {}};
      if (n.kind == NodeKind::Leaf) op.leaf = leaf_index.at(id);
      for (const auto& c : n.children) op.children.push_back(index.at(c));
      index[id] = ops.size();
      ops.push_back(std::move(op));
    }
  }

  template <class IsUp>
  bool eval(IsUp&& is_up, std::vector<char>& value) const {
    value.resize(ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const Op& op = ops[i];
      switch (op.kind) {
        case NodeKind::Leaf: value[i] = is_up(op.leaf); break;
        case NodeKind::And:
          value[i] = std::all_of(op.children.begin(), op.children.end(), [&](std::size_t c) { return value[c]; });
          break;
        case NodeKind::Or:
          value[i] = std::any_of(op.children.begin(), op.children.end(), [&](std::size_t c) { return value[c]; });
          break;
      }
    }
    return value.back();
  }
};

}  // namespace detail

/// Root state under a leaf up/down assignment. Shared nodes are computed once.
inline bool evaluate(const DepGraph& g, const std::map<std::string, bool>& up) {
  std::vector<bool> leaf_up;
  for (const auto& id : g.leaves()) {
    auto it = up.find(id);
    if (it == up.end()) throw ConfigError("evaluate: no state for leaf '" + id + "'");
    leaf_up.push_back(it->second);
  }
  std::vector<char> scratch;
  return detail::Compiled(g).eval([&](std::size_t i) { return leaf_up[i]; }, scratch);
}

/// Sum over all leaf states of P(state) * [root up], in arithmetic `Num`.
/// `p_up(leaf_id)` supplies each leaf's probability in that arithmetic.
template <class Num>
Num enumerate_reliability(const DepGraph& g, const std::function<Num(const std::string&)>& p_up) {
  const auto& leaves = g.leaves();
  if (leaves.size() > kMaxExactLeaves) {
    throw TooLarge("graph has " + std::to_string(leaves.size()) + " leaves; exact enumeration is limited to " +
                   std::to_string(kMaxExactLeaves));
  }
  const detail::Compiled c(g);
  std::vector<Num> up, down;
  for (const auto& id : leaves) {
    up.push_back(p_up(id));
    down.push_back(Num(1) - up.back());
  }
  std::vector<char> scratch;
  Num total(0);
  const std::uint64_t states = std::uint64_t{1} << leaves.size();
  for (std::uint64_t s = 0; s < states; ++s) {
    if (!c.eval([&](std::size_t i) { return ((s >> i) & 1) != 0; }, scratch)) continue;
    Num p(1);
    for (std::size_t i = 0; i < leaves.size(); ++i) p = p * (((s >> i) & 1) ? up[i] : down[i]);
    total = total + p;
  }
  return total;
}

inline double reliability_exact(const DepGraph& g) {
  return enumerate_reliability<double>(g, [&](const std::string& id) { return g.node(id).p_up; });
}

/// Compositional fault-tree value that treats every child as independent.
inline double reliability_naive(const DepGraph& g) {
  std::map<std::string, double> value;
  for (const auto& id : g.topo_order()) {
    const Node& n = g.node(id);
    double v = 0;
    switch (n.kind) {
      case NodeKind::Leaf: v = n.p_up; break;
      case NodeKind::And:
        v = 1.0;
        for (const auto& c : n.children) v *= value.at(c);
        break;
      case NodeKind::Or: {
        double all_down = 1.0;
        for (const auto& c : n.children) all_down *= 1.0 - value.at(c);
        v = 1.0 - all_down;
        break;
      }
    }
    value[id] = v;
  }
  return value.at(g.root());
}

struct McEstimate {
  double estimate = 0;
  double stderr_ = 0;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
};

inline McEstimate reliability_mc(const DepGraph& g, std::uint64_t samples, std::uint64_t seed) {
  if (samples == 0) throw ConfigError("mc: samples must be at least 1");
  const detail::Compiled c(g);
  std::vector<double> p;
  for (const auto& id : g.leaves()) p.push_back(g.node(id).p_up);
  Rng rng(seed);
  std::vector<char> scratch;
  std::vector<char> state(p.size());
  std::uint64_t up = 0;
  for (std::uint64_t k = 0; k < samples; ++k) {
    for (std::size_t i = 0; i < p.size(); ++i) state[i] = rng.uniform01() < p[i];
    up += c.eval([&](std::size_t i) { return state[i] != 0; }, scratch);
  }
  McEstimate m;
  m.samples = samples;
  m.seed = seed;
  m.estimate = static_cast<double>(up) / static_cast<double>(samples);
  m.stderr_ = std::sqrt(m.estimate * (1.0 - m.estimate) / static_cast<double>(samples));
  return m;
}

/// Nodes with two or more distinct parents, by (parent count desc, id).
inline std::vector<std::string> find_shared(const DepGraph& g) {
  std::map<std::string, std::set<std::string>> parents;
  for (const auto& id : g.topo_order()) {
    for (const auto& c : g.node(id).children) parents[c].insert(id);
  }
  std::vector<std::pair<std::size_t, std::string>> shared;
  for (const auto& [id, ps] : parents) {
    if (ps.size() >= 2) shared.emplace_back(ps.size(), id);
  }
  std::sort(shared.begin(), shared.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (auto& [n, id] : shared) out.push_back(std::move(id));
  return out;
}

/// Rounds to 12 decimal places for reporting.
inline double round12(double x) { return std::round(x * 1e12) / 1e12; }

inline nlohmann::json report(const DepGraph& g, const std::string& method, std::uint64_t samples = 0,
                             std::uint64_t seed = 0) {
  nlohmann::json j;
  j["root"] = g.root();
  j["leaves"] = g.leaves().size();
  j["method"] = method;
  j["naive"] = round12(reliability_naive(g));
  j["shared"] = find_shared(g);
  j["semantics"] = "per-demand probability that each component is up; leaves independent";
  if (method == "exact") {
    j["actual"] = round12(reliability_exact(g));
  } else if (method == "mc") {
    const auto m = reliability_mc(g, samples, seed);
    j["actual"] = round12(m.estimate);
    j["stderr"] = round12(m.stderr_);
    j["samples"] = m.samples;
    j["seed"] = m.seed;
  } else {
    throw ConfigError("depgraph: unknown method '" + method + "' (expected exact or mc)");
  }
  j["gap"] = round12(j["naive"].get<double>() - j["actual"].get<double>());
  return j;
}

}  // namespace cloudrisk::depgraph

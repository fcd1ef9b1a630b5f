#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafe/error.hpp"
#include "cafe/util.hpp"

namespace cafe {

enum class VarKind { Continuous, Categorical };

/// A declared variable: name, kind, and its domain. Continuous domains are
/// [lo, hi] metadata used by grid interventions; loaders do not clamp to them.
/// Categorical levels are numeric codes, kept in declaration order because
/// tie-breaks ("first class in domain order") depend on it.
struct VariableDecl {
  std::string name;
  VarKind kind = VarKind::Continuous;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> levels;

  void validate() const {
    if (kind == VarKind::Categorical) {
      require(!levels.empty(), "bad-domain", "categorical variable '" + name + "' needs a nonempty level list");
    } else {
      require(lo <= hi, "bad-domain", "continuous variable '" + name + "' has lo > hi");
    }
  }
};

/// A set of directed feature-to-outcome paths, each stored as node names.
struct PathSet {
  std::vector<std::vector<std::string>> paths;
};

/// Directed acyclic causal graph over feature variables and one outcome node.
/// Immutable after construction; every query is const and safe to share
/// across workers.
class CausalGraph {
 public:
  CausalGraph() = default;

  /// Validates all structural invariants: declared endpoints, no self-loops
  /// or duplicate edges, acyclicity (diagnostic names one cycle), outcome is
  /// a sink. Backdoor overrides are checked for validity up front.
  CausalGraph(std::vector<VariableDecl> nodes,
              const std::vector<std::pair<std::string, std::string>>& edges,
              const std::string& outcome,
              const std::map<std::string, std::vector<std::string>>& backdoor_overrides = {})
      : nodes_(std::move(nodes)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      nodes_[i].validate();
      require(index_.emplace(nodes_[i].name, static_cast<int>(i)).second, "duplicate-node",
              "node '" + nodes_[i].name + "' declared twice");
    }
    parents_.resize(nodes_.size());
    children_.resize(nodes_.size());
    for (const auto& [p, c] : edges) {
      const int pi = index(p), ci = index(c);
      require(pi != ci, "self-loop", "edge " + p + " -> " + c);
      for (const auto& e : edges_)
        require(e != std::make_pair(pi, ci), "duplicate-edge", "edge " + p + " -> " + c + " repeated");
      edges_.emplace_back(pi, ci);
      parents_[static_cast<std::size_t>(ci)].push_back(pi);
      children_[static_cast<std::size_t>(pi)].push_back(ci);
    }
    for (auto& v : parents_) std::sort(v.begin(), v.end());
    for (auto& v : children_) std::sort(v.begin(), v.end());
    outcome_ = index(outcome);
    require(children_[static_cast<std::size_t>(outcome_)].empty(), "outcome-not-sink",
            "outcome '" + outcome + "' has outgoing edges");
    topo_ = compute_topological_order();
    for (const auto& [f, z] : backdoor_overrides) {
      const int fi = index(f);
      require(fi != outcome_, "bad-override", "backdoor override for the outcome");
      std::vector<int> zi;
      for (const auto& nm : z) zi.push_back(index(nm));
      std::sort(zi.begin(), zi.end());
      validate_backdoor(fi, zi);
      overrides_[fi] = std::move(zi);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<VariableDecl>& nodes() const { return nodes_; }
  const VariableDecl& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  int outcome() const { return outcome_; }
  const std::string& outcome_name() const { return nodes_[static_cast<std::size_t>(outcome_)].name; }
  const std::vector<int>& parents(int v) const { return parents_[static_cast<std::size_t>(v)]; }
  const std::vector<int>& children(int v) const { return children_[static_cast<std::size_t>(v)]; }
  const std::map<int, std::vector<int>>& backdoor_overrides() const { return overrides_; }

  bool has_node(const std::string& name) const { return index_.count(name) > 0; }

  int index(const std::string& name) const {
    const auto it = index_.find(name);
    require(it != index_.end(), "unknown-node", "no node named '" + name + "'");
    return it->second;
  }

  bool has_edge(int p, int c) const {
    const auto& ch = children_[static_cast<std::size_t>(p)];
    return std::binary_search(ch.begin(), ch.end(), c);
  }

  /// Feature names (everything but the outcome) in declaration order.
  std::vector<std::string> feature_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (static_cast<int>(i) != outcome_) out.push_back(nodes_[i].name);
    return out;
  }

  /// Parents before children; ties broken by declaration order.
  const std::vector<int>& topological_order() const { return topo_; }

  std::vector<std::string> topological_order_names() const {
    std::vector<std::string> out;
    for (int v : topo_) out.push_back(node(v).name);
    return out;
  }

  /// Nodes reachable from v along directed paths, v excluded. Ascending index.
  std::vector<int> descendants(int v) const {
    check_node(v);
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<int> stack{v}, out;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int c : children_[static_cast<std::size_t>(u)]) {
        if (!seen[static_cast<std::size_t>(c)]) {
          seen[static_cast<std::size_t>(c)] = 1;
          out.push_back(c);
          stack.push_back(c);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<std::string> descendants(const std::string& v) const {
    return names(descendants(index(v)));
  }

  /// Standard d-separation via the reachability ("Bayes ball") scheme: y is
  /// separated from x given z when no active trail survives the usual
  /// chain/fork/collider blocking rules.
  bool d_separated(int x, int y, const std::vector<int>& z) const {
    check_node(x);
    check_node(y);
    require(x != y, "bad-query", "d_separated: x == y");
    std::vector<char> in_z(nodes_.size(), 0);
    for (int v : z) {
      check_node(v);
      require(v != x && v != y, "bad-query", "d_separated: conditioning set contains an endpoint");
      in_z[static_cast<std::size_t>(v)] = 1;
    }
    // ancestors of z (z included): colliders open only inside this set
    std::vector<char> anc_z = in_z;
    {
      std::vector<int> stack(z.begin(), z.end());
      while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int p : parents_[static_cast<std::size_t>(u)]) {
          if (!anc_z[static_cast<std::size_t>(p)]) {
            anc_z[static_cast<std::size_t>(p)] = 1;
            stack.push_back(p);
          }
        }
      }
    }
    // states: (node, arrived-from-child?) — 2 flags per node
    std::vector<char> visited(nodes_.size() * 2, 0);
    std::vector<std::pair<int, bool>> stack{{x, true}};
    while (!stack.empty()) {
      const auto [v, from_child] = stack.back();
      stack.pop_back();
      auto& mark = visited[static_cast<std::size_t>(v) * 2 + (from_child ? 1 : 0)];
      if (mark) continue;
      mark = 1;
      const bool blocked = in_z[static_cast<std::size_t>(v)];
      if (!blocked && v == y) return false;
      if (from_child) {
        if (!blocked) {
          for (int p : parents_[static_cast<std::size_t>(v)]) stack.emplace_back(p, true);
          for (int c : children_[static_cast<std::size_t>(v)]) stack.emplace_back(c, false);
        }
      } else {
        if (!blocked)
          for (int c : children_[static_cast<std::size_t>(v)]) stack.emplace_back(c, false);
        if (anc_z[static_cast<std::size_t>(v)])  // collider with observed descendant
          for (int p : parents_[static_cast<std::size_t>(v)]) stack.emplace_back(p, true);
      }
    }
    return true;
  }

  bool d_separated(const std::string& x, const std::string& y,
                   const std::vector<std::string>& z) const {
    std::vector<int> zi;
    for (const auto& nm : z) zi.push_back(index(nm));
    return d_separated(index(x), index(y), zi);
  }

  /// Backdoor adjustment set for f -> outcome: the parent set Pa(f), unless a
  /// validated override was supplied in the graph file.
  std::vector<int> backdoor_set(int f) const {
    check_node(f);
    require(f != outcome_, "bad-query", "backdoor_set: f is the outcome");
    if (const auto it = overrides_.find(f); it != overrides_.end()) return it->second;
    return parents_[static_cast<std::size_t>(f)];
  }

  std::vector<std::string> backdoor_set(const std::string& f) const {
    return names(backdoor_set(index(f)));
  }

  /// Nodes other than f and the outcome lying on some directed path f ~> Y.
  std::vector<int> mediators(int f) const {
    check_node(f);
    require(f != outcome_, "bad-query", "mediators: f is the outcome");
    // descendants of f that are also ancestors of Y
    std::vector<char> anc_y(nodes_.size(), 0);
    std::vector<int> stack{outcome_};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int p : parents_[static_cast<std::size_t>(u)]) {
        if (!anc_y[static_cast<std::size_t>(p)]) {
          anc_y[static_cast<std::size_t>(p)] = 1;
          stack.push_back(p);
        }
      }
    }
    std::vector<int> out;
    for (int d : descendants(f))
      if (d != outcome_ && anc_y[static_cast<std::size_t>(d)]) out.push_back(d);
    return out;
  }

  std::vector<std::string> mediators(const std::string& f) const {
    return names(mediators(index(f)));
  }

  /// All directed paths f ~> Y, each as a node-name sequence, ordered
  /// lexicographically by declaration index. Refuses to enumerate beyond
  /// `cap` paths.
  PathSet directed_paths(int f, std::size_t cap = 10000) const {
    check_node(f);
    require(f != outcome_, "bad-query", "directed_paths: f is the outcome");
    PathSet out;
    std::vector<int> path{f};
    enumerate_paths(f, path, cap, out);
    return out;
  }

  PathSet directed_paths(const std::string& f, std::size_t cap = 10000) const {
    return directed_paths(index(f), cap);
  }

  /// d-separation check behind the backdoor postcondition: z must block every
  /// path between f and Y once f's outgoing edges are removed.
  bool backdoor_valid(int f, const std::vector<int>& z) const {
    std::vector<std::pair<std::string, std::string>> kept;
    for (const auto& [p, c] : edges_)
      if (p != f) kept.emplace_back(node(p).name, node(c).name);
    CausalGraph pruned(nodes_, kept, outcome_name());
    return pruned.d_separated(f, pruned.outcome_, z);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : nodes_) {
      nlohmann::json jn{{"name", n.name}};
      if (n.kind == VarKind::Categorical) {
        jn["kind"] = "categorical";
        jn["domain"] = n.levels;
      } else {
        jn["kind"] = "continuous";
        jn["domain"] = {n.lo, n.hi};
      }
      j["nodes"].push_back(jn);
    }
    j["edges"] = nlohmann::json::array();
    for (const auto& [p, c] : edges_) j["edges"].push_back({node(p).name, node(c).name});
    j["outcome"] = outcome_name();
    if (!overrides_.empty()) {
      nlohmann::json jo;
      for (const auto& [f, z] : overrides_) jo[node(f).name] = names(z);
      j["backdoor_overrides"] = jo;
    }
    return j;
  }

  static CausalGraph from_json(const nlohmann::json& j) {
    std::vector<VariableDecl> nodes;
    require(j.contains("nodes") && j.contains("edges") && j.contains("outcome"), "bad-graph-file",
            "graph document needs 'nodes', 'edges' and 'outcome'");
    for (const auto& jn : j.at("nodes")) {
      VariableDecl d;
      d.name = jn.at("name").get<std::string>();
      const std::string kind = jn.value("kind", "continuous");
      if (kind == "categorical") {
        d.kind = VarKind::Categorical;
        for (const auto& v : jn.at("domain")) d.levels.push_back(parse_level(v, d.name));
      } else if (kind == "continuous") {
        d.kind = VarKind::Continuous;
        const auto& dom = jn.at("domain");
        require(dom.is_array() && dom.size() == 2, "bad-graph-file",
                "continuous domain of '" + d.name + "' must be [lo, hi]");
        d.lo = dom[0].get<double>();
        d.hi = dom[1].get<double>();
      } else {
        fail("bad-graph-file", "unknown kind '" + kind + "' for node '" + d.name + "'");
      }
      nodes.push_back(std::move(d));
    }
    std::vector<std::pair<std::string, std::string>> edges;
    for (const auto& je : j.at("edges")) {
      require(je.is_array() && je.size() == 2, "bad-graph-file", "edge must be a [parent, child] pair");
      edges.emplace_back(je[0].get<std::string>(), je[1].get<std::string>());
    }
    std::map<std::string, std::vector<std::string>> overrides;
    if (j.contains("backdoor_overrides"))
      for (const auto& [f, z] : j.at("backdoor_overrides").items())
        overrides[f] = z.get<std::vector<std::string>>();
    return CausalGraph(std::move(nodes), edges, j.at("outcome").get<std::string>(), overrides);
  }

  /// Stable content hash of the canonical serialized form.
  std::string hash() const { return util::hex64(util::fnv1a(to_json().dump())); }

  std::vector<std::string> names(const std::vector<int>& idx) const {
    std::vector<std::string> out;
    for (int i : idx) out.push_back(node(i).name);
    return out;
  }

 private:
  void check_node(int v) const {
    require(v >= 0 && static_cast<std::size_t>(v) < nodes_.size(), "unknown-node",
            "node index out of range");
  }

  std::vector<int> compute_topological_order() const {
    std::vector<int> indeg(nodes_.size(), 0), order;
    for (const auto& [p, c] : edges_) {
      (void)p;
      ++indeg[static_cast<std::size_t>(c)];
    }
    // declaration-order scan keeps ties deterministic
    std::vector<char> done(nodes_.size(), 0);
    for (std::size_t placed = 0; placed < nodes_.size();) {
      bool progressed = false;
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (done[i] || indeg[i] != 0) continue;
        done[i] = 1;
        order.push_back(static_cast<int>(i));
        ++placed;
        progressed = true;
        for (int c : children_[i]) --indeg[static_cast<std::size_t>(c)];
        break;
      }
      if (!progressed) fail("cycle-detected", describe_cycle());
    }
    return order;
  }

  std::string describe_cycle() const {
    // DFS until a back edge closes a loop; report that loop
    std::vector<int> state(nodes_.size(), 0);  // 0 new, 1 open, 2 closed
    std::vector<int> trail;
    std::string found;
    std::function<bool(int)> dfs = [&](int v) {
      state[static_cast<std::size_t>(v)] = 1;
      trail.push_back(v);
      for (int c : children_[static_cast<std::size_t>(v)]) {
        if (state[static_cast<std::size_t>(c)] == 1) {
          std::ostringstream os;
          const auto it = std::find(trail.begin(), trail.end(), c);
          for (auto p = it; p != trail.end(); ++p) os << node(*p).name << " -> ";
          os << node(c).name;
          found = os.str();
          return true;
        }
        if (state[static_cast<std::size_t>(c)] == 0 && dfs(c)) return true;
      }
      trail.pop_back();
      state[static_cast<std::size_t>(v)] = 2;
      return false;
    };
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (state[i] == 0 && dfs(static_cast<int>(i))) break;
    return "cycle: " + (found.empty() ? std::string("(unlocated)") : found);
  }

  void enumerate_paths(int v, std::vector<int>& path, std::size_t cap, PathSet& out) const {
    if (v == outcome_) {
      require(out.paths.size() < cap, "path-explosion",
              "more than " + std::to_string(cap) + " directed paths");
      out.paths.push_back(names(path));
      return;
    }
    for (int c : children_[static_cast<std::size_t>(v)]) {
      path.push_back(c);
      enumerate_paths(c, path, cap, out);
      path.pop_back();
    }
  }

  void validate_backdoor(int f, const std::vector<int>& z) const {
    const auto desc = descendants(f);
    for (int v : z) {
      require(v != f && v != outcome_, "bad-override",
              "backdoor override for '" + node(f).name + "' contains an endpoint");
      require(!std::binary_search(desc.begin(), desc.end(), v), "bad-override",
              "backdoor override for '" + node(f).name + "' contains descendant '" + node(v).name + "'");
    }
    require(backdoor_valid(f, z), "bad-override",
            "backdoor override for '" + node(f).name + "' does not block all confounding paths");
  }

  static double parse_level(const nlohmann::json& v, const std::string& name) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      try {
        std::size_t pos = 0;
        const double d = std::stod(s, &pos);
        if (pos == s.size()) return d;
      } catch (...) {
      }
    }
    fail("bad-domain", "categorical level of '" + name + "' must be a numeric code");
  }

  std::vector<VariableDecl> nodes_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> parents_, children_;
  std::map<std::string, int> index_;
  std::map<int, std::vector<int>> overrides_;
  int outcome_ = -1;
  std::vector<int> topo_;
};

inline CausalGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "file-not-found", "cannot open graph file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail("bad-graph-file", std::string("graph parse error: ") + e.what());
  }
  return CausalGraph::from_json(j);
}

inline void save_graph(const CausalGraph& g, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-error", "cannot write graph file '" + path + "'");
  out << g.to_json().dump(2) << "\n";
}

}  // namespace cafe

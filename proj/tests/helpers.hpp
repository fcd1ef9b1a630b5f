#pragma once

// Shared fixtures and brute-force oracles for the test suites. Everything
// here is deliberately independent from the library's own algorithms: the
// oracles recompute answers by exhaustive enumeration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cafe/graph.hpp"
#include "cafe/model.hpp"
#include "cafe/rng.hpp"
#include "cafe/synth.hpp"

namespace testutil {

inline cafe::VariableDecl binary(const std::string& name) {
  cafe::VariableDecl d;
  d.name = name;
  d.kind = cafe::VarKind::Categorical;
  d.levels = {0.0, 1.0};
  return d;
}

inline cafe::VariableDecl continuous(const std::string& name, double lo, double hi) {
  cafe::VariableDecl d;
  d.name = name;
  d.kind = cafe::VarKind::Continuous;
  d.lo = lo;
  d.hi = hi;
  return d;
}

/// S -> B, S -> M, E -> M, B -> R, M -> R with outcome R.
inline cafe::CausalGraph heart_graph() {
  return cafe::CausalGraph(
      {binary("smoking"), binary("exercise"), continuous("blood_pressure", -20, 40),
       continuous("bmi", -20, 20), continuous("risk", -50, 50)},
      {{"smoking", "blood_pressure"},
       {"smoking", "bmi"},
       {"exercise", "bmi"},
       {"blood_pressure", "risk"},
       {"bmi", "risk"}},
      "risk");
}

/// Random DAG over `n` nodes: each forward pair (i, j), i < j, becomes an
/// edge with probability `density`. The last node that has no outgoing edge
/// is the outcome; we force at least one edge into the last node.
inline cafe::CausalGraph random_dag(std::uint64_t seed, int n, double density = 0.4) {
  std::vector<cafe::VariableDecl> nodes;
  for (int i = 0; i < n; ++i) nodes.push_back(continuous("v" + std::to_string(i), 0, 1));
  std::vector<std::pair<std::string, std::string>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (cafe::rng::u01(seed, 77, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)) <
          density)
        edges.emplace_back(nodes[static_cast<std::size_t>(i)].name,
                           nodes[static_cast<std::size_t>(j)].name);
  // ensure the declared outcome is a sink with at least one parent
  bool into_last = false;
  for (auto& [p, c] : edges) into_last = into_last || c == nodes.back().name;
  if (!into_last && n >= 2) edges.emplace_back(nodes[0].name, nodes.back().name);
  return cafe::CausalGraph(nodes, edges, nodes.back().name);
}

/// Brute-force d-separation: enumerate every simple undirected path and apply
/// the chain/fork/collider rules directly.
inline bool dsep_bruteforce(const cafe::CausalGraph& g, int x, int y, const std::vector<int>& z) {
  const int n = static_cast<int>(g.size());
  std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(n));
  for (const auto& [p, c] : g.edges()) {
    neighbors[static_cast<std::size_t>(p)].push_back(c);
    neighbors[static_cast<std::size_t>(c)].push_back(p);
  }
  std::set<int> zset(z.begin(), z.end());
  auto observed_or_descendant_observed = [&](int v) {
    if (zset.count(v)) return true;
    for (int d : g.descendants(v))
      if (zset.count(d)) return true;
    return false;
  };

  std::vector<int> path{x};
  std::vector<char> on_path(static_cast<std::size_t>(n), 0);
  on_path[static_cast<std::size_t>(x)] = 1;
  bool found_active = false;

  std::function<void(int)> dfs = [&](int v) {
    if (found_active) return;
    if (v == y) {
      // check activation of this path
      bool active = true;
      for (std::size_t k = 1; k + 1 < path.size(); ++k) {
        const int prev = path[k - 1], mid = path[k], next = path[k + 1];
        const bool collider = g.has_edge(prev, mid) && g.has_edge(next, mid);
        if (collider) {
          if (!observed_or_descendant_observed(mid)) active = false;
        } else {
          if (zset.count(mid)) active = false;
        }
        if (!active) break;
      }
      if (active) found_active = true;
      return;
    }
    for (int w : neighbors[static_cast<std::size_t>(v)]) {
      if (on_path[static_cast<std::size_t>(w)]) continue;
      on_path[static_cast<std::size_t>(w)] = 1;
      path.push_back(w);
      dfs(w);
      path.pop_back();
      on_path[static_cast<std::size_t>(w)] = 0;
    }
  };
  dfs(x);
  return !found_active;
}

/// Heart generator used across suites: B = 10 S + e, M = 2 S - 3 E + e,
/// R = 0.5 B + 1.0 M + e.
inline cafe::GeneratorSpec heart_spec(std::size_t n = 10000, std::uint64_t seed = 7,
                                      double sigma = 1.0) {
  cafe::GeneratorSpec spec;
  spec.graph = heart_graph();
  const int S = spec.graph.index("smoking"), E = spec.graph.index("exercise"),
            B = spec.graph.index("blood_pressure"), M = spec.graph.index("bmi"),
            R = spec.graph.index("risk");
  spec.roots[S] = {cafe::RootDistribution::Bernoulli, 0.5, 0, 1};
  spec.roots[E] = {cafe::RootDistribution::Bernoulli, 0.5, 0, 1};
  spec.equations[B] = {0.0, {{S, 10.0}}, sigma};
  spec.equations[M] = {0.0, {{S, 2.0}, {E, -3.0}}, sigma};
  spec.equations[R] = {0.0, {{B, 0.5}, {M, 1.0}}, sigma};
  spec.seed = seed;
  spec.n = n;
  return spec;
}

// ---------------------------------------------------------------------------
// Random discrete structural models with exactly enumerable joints. The CPT
// probabilities are multiples of 1/5, so a dataset with 2 * 5^k rows realizes
// the joint distribution exactly and every (stratum, arm) cell holds at least
// two rows.

struct BayesNet {
  cafe::CausalGraph graph;                    // binary features + outcome "y"
  std::map<int, std::vector<double>> cpt;     // feature node -> P(v=1 | parent mask)
  std::vector<double> y_cpt;                  // P(y=1 | y-parent mask)
  int n_features = 0;
};

inline BayesNet random_bayes_net(std::uint64_t seed) {
  BayesNet net;
  net.n_features = 1 + static_cast<int>(cafe::rng::below(3, seed, 50));  // 1..3
  std::vector<cafe::VariableDecl> nodes;
  for (int i = 0; i < net.n_features; ++i) nodes.push_back(binary("f" + std::to_string(i)));
  nodes.push_back(continuous("y", 0, 1));
  std::vector<std::pair<std::string, std::string>> edges;
  for (int i = 0; i < net.n_features; ++i)
    for (int j = i + 1; j < net.n_features; ++j)
      if (cafe::rng::u01(seed, 51, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)) < 0.45)
        edges.emplace_back("f" + std::to_string(i), "f" + std::to_string(j));
  bool y_has_parent = false;
  for (int i = 0; i < net.n_features; ++i)
    if (cafe::rng::u01(seed, 52, static_cast<std::uint64_t>(i)) < 0.6) {
      edges.emplace_back("f" + std::to_string(i), "y");
      y_has_parent = true;
    }
  if (!y_has_parent) edges.emplace_back("f" + std::to_string(net.n_features - 1), "y");
  net.graph = cafe::CausalGraph(nodes, edges, "y");

  auto draw_p = [&](std::uint64_t a, std::uint64_t b) {
    return 0.2 + 0.2 * static_cast<double>(cafe::rng::below(4, seed, 53, a, b));
  };
  for (int v = 0; v < net.n_features; ++v) {
    const auto& parents = net.graph.parents(v);
    std::vector<double> table(1u << parents.size());
    for (std::size_t mask = 0; mask < table.size(); ++mask)
      table[mask] = draw_p(static_cast<std::uint64_t>(v), mask);
    net.cpt[v] = std::move(table);
  }
  const auto& y_parents = net.graph.parents(net.graph.outcome());
  net.y_cpt.resize(1u << y_parents.size());
  for (std::size_t mask = 0; mask < net.y_cpt.size(); ++mask)
    net.y_cpt[mask] = draw_p(99, mask);
  return net;
}

inline std::size_t parent_mask(const cafe::CausalGraph& g, int v,
                               const std::vector<int>& config) {
  std::size_t mask = 0;
  const auto& parents = g.parents(v);
  for (std::size_t j = 0; j < parents.size(); ++j)
    if (config[static_cast<std::size_t>(parents[j])]) mask |= 1u << j;
  return mask;
}

/// Joint probability of one feature configuration.
inline double joint_probability(const BayesNet& net, const std::vector<int>& config) {
  double p = 1.0;
  for (int v = 0; v < net.n_features; ++v) {
    const double p1 = net.cpt.at(v)[parent_mask(net.graph, v, config)];
    p *= config[static_cast<std::size_t>(v)] ? p1 : 1.0 - p1;
  }
  return p;
}

/// Dataset whose empirical distribution equals the joint exactly:
/// 2 * 5^k * P(x) copies of each configuration (an integer by construction).
inline cafe::Dataset exact_joint_dataset(const BayesNet& net) {
  const int nf = net.n_features;
  double denom = 2.0;
  for (int i = 0; i < nf; ++i) denom *= 5.0;
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(nf));
  for (std::size_t code = 0; code < (1u << nf); ++code) {
    std::vector<int> config(static_cast<std::size_t>(nf));
    for (int v = 0; v < nf; ++v) config[static_cast<std::size_t>(v)] = (code >> v) & 1;
    const long copies = std::lround(denom * joint_probability(net, config));
    for (long c = 0; c < copies; ++c)
      for (int v = 0; v < nf; ++v)
        cols[static_cast<std::size_t>(v)].push_back(config[static_cast<std::size_t>(v)]);
  }
  std::vector<cafe::VariableDecl> schema;
  for (int i = 0; i < nf; ++i) schema.push_back(binary("f" + std::to_string(i)));
  return cafe::Dataset::from_columns(schema, std::move(cols), -1);
}

/// The net's outcome mechanism as a deterministic model:
/// M(x) = P(y=1 | pa_y(x)).
inline std::shared_ptr<cafe::PredictionModel> bayes_net_model(const BayesNet& net) {
  std::vector<std::string> schema;
  for (int i = 0; i < net.n_features; ++i) schema.push_back("f" + std::to_string(i));
  const auto g = net.graph;
  const auto y_cpt = net.y_cpt;
  const int nf = net.n_features;
  return std::make_shared<cafe::FunctionModel>(schema, [g, y_cpt, nf](std::span<const double> row) {
    std::vector<int> config(static_cast<std::size_t>(nf));
    for (int v = 0; v < nf; ++v) config[static_cast<std::size_t>(v)] = row[static_cast<std::size_t>(v)] != 0.0;
    return y_cpt[parent_mask(g, g.outcome(), config)];
  });
}

/// Brute-force interventional contrast: enumerate every background
/// configuration under do(f=1) and do(f=0) and average the model output.
inline double bruteforce_ate(const BayesNet& net, int f) {
  const int nf = net.n_features;
  double ate = 0.0;
  for (int arm = 1; arm >= 0; --arm) {
    double arm_mean = 0.0;
    for (std::size_t code = 0; code < (1u << nf); ++code) {
      std::vector<int> config(static_cast<std::size_t>(nf));
      for (int v = 0; v < nf; ++v) config[static_cast<std::size_t>(v)] = (code >> v) & 1;
      if (config[static_cast<std::size_t>(f)] != arm) continue;
      double p = 1.0;
      for (int v = 0; v < nf; ++v) {
        if (v == f) continue;  // intervened: mechanism replaced by the constant
        const double p1 = net.cpt.at(v)[parent_mask(net.graph, v, config)];
        p *= config[static_cast<std::size_t>(v)] ? p1 : 1.0 - p1;
      }
      const double m = net.y_cpt[parent_mask(net.graph, net.graph.outcome(), config)];
      arm_mean += p * m;
    }
    ate += arm ? arm_mean : -arm_mean;
  }
  return ate;
}

}  // namespace testutil

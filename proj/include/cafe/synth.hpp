#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafe/dataset.hpp"
#include "cafe/error.hpp"
#include "cafe/graph.hpp"
#include "cafe/rng.hpp"

namespace cafe {

/// One additive term of a structural equation: coef * parent, optionally
/// switched by an indicator on another parent (coef * parent * [gate > thr]).
/// Gates keep the generator linear within each gate stratum, which is what
/// the per-group effect oracle relies on.
struct EquationTerm {
  int parent = -1;
  double coef = 0.0;
  int gate_feature = -1;   // -1: ungated
  double gate_threshold = 0.0;

  bool gated() const { return gate_feature >= 0; }
};

struct NodeEquation {
  double intercept = 0.0;
  std::vector<EquationTerm> terms;
  double sigma = 0.0;
};

struct RootDistribution {
  enum Kind { Bernoulli, Uniform } kind = Bernoulli;
  double p = 0.5;       // Bernoulli
  double lo = 0.0, hi = 1.0;  // Uniform
};

/// Everything needed to sample a dataset ancestrally: the graph, one linear
/// equation per non-root node (outcome included), and a distribution per
/// root. Deterministic under (seed, n).
struct GeneratorSpec {
  CausalGraph graph;
  std::map<int, NodeEquation> equations;       // keyed by node index
  std::map<int, RootDistribution> roots;       // keyed by node index
  std::uint64_t seed = 0;
  std::size_t n = 1000;

  void validate() const {
    for (std::size_t i = 0; i < graph.size(); ++i) {
      const int v = static_cast<int>(i);
      const bool is_root = graph.parents(v).empty();
      if (is_root) {
        require(roots.count(v) == 1, "bad-spec",
                "root '" + graph.node(v).name + "' needs a distribution");
        require(equations.count(v) == 0, "bad-spec",
                "root '" + graph.node(v).name + "' cannot have an equation");
      } else {
        require(equations.count(v) == 1, "bad-spec",
                "non-root '" + graph.node(v).name + "' needs an equation");
        require(roots.count(v) == 0, "bad-spec",
                "non-root '" + graph.node(v).name + "' cannot have a root distribution");
        const auto& eq = equations.at(v);
        require(eq.sigma >= 0.0, "bad-spec", "sigma < 0 on '" + graph.node(v).name + "'");
        const auto& parents = graph.parents(v);
        auto is_parent = [&](int u) {
          return std::find(parents.begin(), parents.end(), u) != parents.end();
        };
        for (const auto& t : eq.terms) {
          require(is_parent(t.parent), "bad-spec",
                  "term parent is not a graph parent of '" + graph.node(v).name + "'");
          if (t.gated())
            require(is_parent(t.gate_feature), "bad-spec",
                    "gate feature is not a graph parent of '" + graph.node(v).name + "'");
        }
      }
    }
  }

  bool has_gates() const {
    for (const auto& [v, eq] : equations) {
      (void)v;
      for (const auto& t : eq.terms)
        if (t.gated()) return true;
    }
    return false;
  }

  /// Noise-free structural response of node v given a full row of values
  /// (indexed by graph node).
  double mechanism(int v, std::span<const double> values) const {
    const auto& eq = equations.at(v);
    double y = eq.intercept;
    for (const auto& t : eq.terms) {
      double c = t.coef;
      if (t.gated() && !(values[static_cast<std::size_t>(t.gate_feature)] > t.gate_threshold))
        c = 0.0;
      y += c * values[static_cast<std::size_t>(t.parent)];
    }
    return y;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["graph"] = graph.to_json();
    nlohmann::json jr;
    for (const auto& [v, d] : roots) {
      nlohmann::json e;
      if (d.kind == RootDistribution::Bernoulli) {
        e["dist"] = "bernoulli";
        e["p"] = d.p;
      } else {
        e["dist"] = "uniform";
        e["lo"] = d.lo;
        e["hi"] = d.hi;
      }
      jr[graph.node(v).name] = e;
    }
    j["roots"] = jr;
    nlohmann::json je;
    for (const auto& [v, eq] : equations) {
      nlohmann::json e{{"intercept", eq.intercept}, {"sigma", eq.sigma}};
      e["terms"] = nlohmann::json::array();
      for (const auto& t : eq.terms) {
        nlohmann::json jt{{"parent", graph.node(t.parent).name}, {"coef", t.coef}};
        if (t.gated()) {
          jt["gate_feature"] = graph.node(t.gate_feature).name;
          jt["gate_threshold"] = t.gate_threshold;
        }
        e["terms"].push_back(jt);
      }
      je[graph.node(v).name] = e;
    }
    j["equations"] = je;
    j["seed"] = seed;
    j["n"] = n;
    return j;
  }

  static GeneratorSpec from_json(const nlohmann::json& j) {
    GeneratorSpec spec;
    spec.graph = CausalGraph::from_json(j.at("graph"));
    for (const auto& [name, e] : j.at("roots").items()) {
      RootDistribution d;
      const std::string kind = e.at("dist").get<std::string>();
      if (kind == "bernoulli") {
        d.kind = RootDistribution::Bernoulli;
        d.p = e.at("p").get<double>();
      } else if (kind == "uniform") {
        d.kind = RootDistribution::Uniform;
        d.lo = e.at("lo").get<double>();
        d.hi = e.at("hi").get<double>();
      } else {
        fail("bad-spec", "unknown root distribution '" + kind + "'");
      }
      spec.roots[spec.graph.index(name)] = d;
    }
    for (const auto& [name, e] : j.at("equations").items()) {
      NodeEquation eq;
      eq.intercept = e.value("intercept", 0.0);
      eq.sigma = e.value("sigma", 0.0);
      for (const auto& jt : e.at("terms")) {
        EquationTerm t;
        t.parent = spec.graph.index(jt.at("parent").get<std::string>());
        t.coef = jt.at("coef").get<double>();
        if (jt.contains("gate_feature")) {
          t.gate_feature = spec.graph.index(jt.at("gate_feature").get<std::string>());
          t.gate_threshold = jt.at("gate_threshold").get<double>();
        }
        eq.terms.push_back(t);
      }
      spec.equations[spec.graph.index(name)] = std::move(eq);
    }
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.n = j.value("n", std::size_t{1000});
    spec.validate();
    return spec;
  }
};

inline GeneratorSpec load_generator_spec(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "file-not-found", "cannot open spec file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail("bad-spec", std::string("spec parse error: ") + e.what());
  }
  return GeneratorSpec::from_json(j);
}

inline void save_generator_spec(const GeneratorSpec& spec, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-error", "cannot write spec file '" + path + "'");
  out << spec.to_json().dump(2) << "\n";
}

/// Ancestral sampling in topological order. Row r, node v draws from the
/// counter stream (seed, tag, r, v), so any row can be regenerated in
/// isolation and the dataset is identical across worker counts.
inline Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  const auto& g = spec.graph;
  std::vector<std::vector<double>> cols(g.size(), std::vector<double>(spec.n));
  const auto order = g.topological_order();
  std::vector<double> row(g.size());
  for (std::size_t r = 0; r < spec.n; ++r) {
    for (int v : order) {
      const auto vi = static_cast<std::size_t>(v);
      double value = 0.0;
      if (g.parents(v).empty()) {
        const auto& d = spec.roots.at(v);
        if (d.kind == RootDistribution::Bernoulli)
          value = rng::u01(spec.seed, rng::kTagRoot, r, vi) < d.p ? 1.0 : 0.0;
        else
          value = d.lo + (d.hi - d.lo) * rng::u01(spec.seed, rng::kTagRoot, r, vi);
      } else {
        const auto& eq = spec.equations.at(v);
        value = spec.mechanism(v, row);
        if (eq.sigma > 0.0) value += eq.sigma * rng::gauss(spec.seed, rng::kTagNoise, r, vi);
      }
      row[vi] = value;
      cols[vi][r] = value;
    }
  }
  return Dataset::from_columns(g.nodes(), std::move(cols), g.outcome());
}

struct EffectTriple {
  double total = 0.0;
  double direct = 0.0;
  double indirect = 0.0;
};

/// Analytic per-feature effects on the outcome for a linear spec: direct is
/// the feature's coefficient in the outcome equation, total sums
/// edge-coefficient products over all directed paths, indirect is their
/// difference. Gated terms require a gate assignment (gate feature index ->
/// indicator state) that resolves the spec to one linear stratum.
inline std::map<std::string, EffectTriple> ground_truth_effects(
    const GeneratorSpec& spec, const std::map<int, bool>& gate_states = {}) {
  spec.validate();
  const auto& g = spec.graph;

  // effective edge coefficient parent -> child under the gate assignment
  auto edge_coef = [&](int parent, int child) {
    const auto it = spec.equations.find(child);
    if (it == spec.equations.end()) return 0.0;
    double c = 0.0;
    for (const auto& t : it->second.terms) {
      if (t.parent != parent) continue;
      if (t.gated()) {
        const auto st = gate_states.find(t.gate_feature);
        require(st != gate_states.end(), "nonlinear-spec",
                "spec has gated terms; provide a gate assignment for '" +
                    g.node(t.gate_feature).name + "'");
        if (!st->second) continue;
      }
      c += t.coef;
    }
    return c;
  };

  std::map<std::string, EffectTriple> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const int f = static_cast<int>(i);
    if (f == g.outcome()) continue;
    EffectTriple e;
    e.direct = g.has_edge(f, g.outcome()) ? edge_coef(f, g.outcome()) : 0.0;
    const auto paths = g.directed_paths(f);
    for (const auto& path : paths.paths) {
      double prod = 1.0;
      for (std::size_t k = 0; k + 1 < path.size(); ++k)
        prod *= edge_coef(g.index(path[k]), g.index(path[k + 1]));
      e.total += prod;
    }
    e.indirect = e.total - e.direct;
    out[g.node(f).name] = e;
  }
  return out;
}

/// Effect triple for one feature name; zero for names outside the graph.
inline EffectTriple ground_truth_effect(const GeneratorSpec& spec, const std::string& feature,
                                        const std::map<int, bool>& gate_states = {}) {
  if (!spec.graph.has_node(feature)) return {};
  return ground_truth_effects(spec, gate_states).at(feature);
}

}  // namespace cafe

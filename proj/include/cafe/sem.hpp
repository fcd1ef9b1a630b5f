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
#include "cafe/linalg.hpp"
#include "cafe/rng.hpp"

namespace cafe {

/// Fitted mechanism for one node: a linear regression on its graph parents
/// for continuous children, a one-vs-rest multinomial logit for categorical
/// ones. `residual_sd` absorbs the noise the graph does not model explicitly.
struct StructuralModel {
  int node = -1;
  std::vector<int> parents;                       // graph parents, declaration order
  bool categorical = false;
  double intercept = 0.0;
  std::vector<double> coef;                       // continuous form
  double residual_sd = 0.0;
  std::vector<double> levels;                     // categorical form: domain order
  std::vector<std::vector<double>> class_weights; // per level: [intercept, coefs...]
  bool ridge_fallback = false;

  /// Deterministic mean prediction from parent values (in parent order):
  /// linear response or argmax class, ties resolved to the first level in
  /// domain order.
  double predict(std::span<const double> parent_values) const {
    require(parent_values.size() == parents.size(), "arity-mismatch",
            "predict_node: expected " + std::to_string(parents.size()) + " parent values, got " +
                std::to_string(parent_values.size()));
    if (!categorical) {
      double y = intercept;
      for (std::size_t j = 0; j < coef.size(); ++j) y += coef[j] * parent_values[j];
      return y;
    }
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < class_weights.size(); ++k) {
      double s = class_weights[k][0];
      for (std::size_t j = 0; j < parent_values.size(); ++j)
        s += class_weights[k][j + 1] * parent_values[j];
      if (s > best_score) {  // strict: earlier level wins ties
        best_score = s;
        best = k;
      }
    }
    return levels[best];
  }
};

inline double predict_node(const StructuralModel& m, std::span<const double> parent_values) {
  return m.predict(parent_values);
}

/// One structural model per non-root feature node. Root features and the
/// outcome have none; interventions on the outcome are meaningless and root
/// values only ever change by direct intervention.
struct StructuralModelSet {
  std::map<int, StructuralModel> by_node;

  bool has(int node) const { return by_node.count(node) > 0; }
  const StructuralModel& at(int node) const { return by_node.at(node); }

  nlohmann::json to_json(const CausalGraph& g) const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [node, m] : by_node) {
      nlohmann::json jm{{"node", g.node(node).name}, {"parents", g.names(m.parents)}};
      if (m.categorical) {
        jm["form"] = "multinomial-logit";
        jm["levels"] = m.levels;
        jm["class_weights"] = m.class_weights;
      } else {
        jm["form"] = "linear";
        jm["intercept"] = m.intercept;
        jm["coef"] = m.coef;
        jm["residual_sd"] = m.residual_sd;
      }
      if (m.ridge_fallback) jm["ridge_fallback"] = true;
      out.push_back(jm);
    }
    return out;
  }

  static StructuralModelSet from_json(const nlohmann::json& j, const CausalGraph& g) {
    StructuralModelSet set;
    for (const auto& jm : j) {
      StructuralModel m;
      m.node = g.index(jm.at("node").get<std::string>());
      for (const auto& p : jm.at("parents")) m.parents.push_back(g.index(p.get<std::string>()));
      const std::string form = jm.at("form").get<std::string>();
      if (form == "multinomial-logit") {
        m.categorical = true;
        m.levels = jm.at("levels").get<std::vector<double>>();
        m.class_weights = jm.at("class_weights").get<std::vector<std::vector<double>>>();
      } else {
        m.intercept = jm.at("intercept").get<double>();
        m.coef = jm.at("coef").get<std::vector<double>>();
        m.residual_sd = jm.at("residual_sd").get<double>();
      }
      m.ridge_fallback = jm.value("ridge_fallback", false);
      set.by_node[m.node] = std::move(m);
    }
    return set;
  }
};

/// Fits the mechanism set from observational data: least squares for
/// continuous children, one-vs-rest logit via IRLS (100 iterations, tol 1e-8)
/// for categorical ones. Deterministic given the data; rank-deficient designs
/// fall back to ridge 1e-6 and are flagged on the model.
inline StructuralModelSet fit_sem(const CausalGraph& g, const Dataset& ds) {
  StructuralModelSet set;
  const std::size_t n = ds.n();
  // column lookup per graph node
  std::vector<int> node_col(g.size(), -1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& name = g.node(static_cast<int>(i)).name;
    if (static_cast<int>(i) == g.outcome() && !ds.has_outcome()) continue;
    node_col[i] = ds.column(name);
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    const int v = static_cast<int>(i);
    if (v == g.outcome()) continue;
    const auto& parents = g.parents(v);
    if (parents.empty()) continue;
    require(n >= parents.size() + 2, "too-few-rows",
            "fitting '" + g.node(v).name + "' needs at least " +
                std::to_string(parents.size() + 2) + " rows");
    Matrix X(n, parents.size() + 1);
    for (std::size_t r = 0; r < n; ++r) {
      X.at(r, 0) = 1.0;
      for (std::size_t j = 0; j < parents.size(); ++j)
        X.at(r, j + 1) = ds.cell(r, static_cast<std::size_t>(node_col[static_cast<std::size_t>(parents[j])]));
    }
    const auto y = ds.column_values(static_cast<std::size_t>(node_col[i]));

    StructuralModel m;
    m.node = v;
    m.parents = parents;
    const auto& decl = g.node(v);
    if (decl.kind == VarKind::Categorical) {
      m.categorical = true;
      m.levels = decl.levels;
      for (double level : decl.levels) {
        std::vector<double> onevall(n);
        for (std::size_t r = 0; r < n; ++r) onevall[r] = y[r] == level ? 1.0 : 0.0;
        auto fit = linalg::logistic_irls(X, onevall);
        m.ridge_fallback = m.ridge_fallback || fit.ridge_fallback;
        m.class_weights.push_back(std::move(fit.coef));
      }
    } else {
      auto fit = linalg::ols(X, y);
      m.ridge_fallback = fit.ridge_fallback;
      m.intercept = fit.coef[0];
      m.coef.assign(fit.coef.begin() + 1, fit.coef.end());
      double ssr = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        double pred = m.intercept;
        for (std::size_t j = 0; j < m.coef.size(); ++j) pred += m.coef[j] * X.at(r, j + 1);
        ssr += (y[r] - pred) * (y[r] - pred);
      }
      m.residual_sd = std::sqrt(ssr / static_cast<double>(n));
    }
    set.by_node[v] = std::move(m);
  }
  return set;
}

inline void save_sem(const StructuralModelSet& sem, const CausalGraph& g, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-error", "cannot write '" + path + "'");
  out << sem.to_json(g).dump(2) << "\n";
}

inline StructuralModelSet load_sem(const std::string& path, const CausalGraph& g) {
  std::ifstream in(path);
  require(in.good(), "file-not-found", "cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  return StructuralModelSet::from_json(j, g);
}

// ---------------------------------------------------------------------------
// Intervention values

enum class InterventionStrategy { Empirical, DomainGrid, FixedPair };

/// One empirical draw: uniform over the observed values of the feature.
inline double sample_intervention_empirical(std::span<const double> observed, std::uint64_t seed,
                                            std::uint64_t row, std::uint64_t feature,
                                            std::uint64_t sample) {
  require(!observed.empty(), "empty-support", "no observed values to draw interventions from");
  const auto i = rng::below(observed.size(), seed, rng::kTagIntervention, row, feature, sample);
  return observed[static_cast<std::size_t>(i)];
}

/// Evenly spaced grid over the declared domain: k points for continuous
/// variables, every level for categorical ones.
inline std::vector<double> intervention_grid(const VariableDecl& decl, int k = 11) {
  if (decl.kind == VarKind::Categorical) return decl.levels;
  require(k >= 2, "bad-config", "domain grid needs at least 2 points");
  std::vector<double> out;
  for (int i = 0; i < k; ++i)
    out.push_back(decl.lo + (decl.hi - decl.lo) * static_cast<double>(i) / static_cast<double>(k - 1));
  return out;
}

}  // namespace cafe

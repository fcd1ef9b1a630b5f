#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cafe/dataset.hpp"
#include "cafe/error.hpp"
#include "cafe/fuzz.hpp"
#include "cafe/graph.hpp"
#include "cafe/linalg.hpp"
#include "cafe/model.hpp"
#include "cafe/predicate.hpp"
#include "cafe/rng.hpp"

namespace cafe {

enum class CafeEstimator { Stratified, Regression };

/// Fast-estimator configuration. The contrast per feature is the
/// (baseline, treatment) intervention pair, defaulting to (0, 1) so scores
/// read as per-unit effects. The verdict threshold tau defaults to 1% of the
/// outcome standard deviation on the audit rows.
struct CafeConfig {
  CafeEstimator estimator = CafeEstimator::Regression;
  std::map<std::string, std::pair<double, double>> contrasts;
  std::optional<double> tau;
  int strata_cap = 64;
  bool unweighted_strata = false;  // compatibility mode: plain sum over strata
  bool bootstrap = false;
  int bootstrap_resamples = 200;
  std::uint64_t seed = 0;

  std::pair<double, double> contrast_for(const std::string& feature) const {
    const auto it = contrasts.find(feature);
    const auto pair = it == contrasts.end() ? std::pair<double, double>{0.0, 1.0} : it->second;
    require(pair.first != pair.second, "bad-config",
            "baseline equals treatment for '" + feature + "'");
    return pair;
  }
};

struct CafeFeatureMeta {
  std::vector<std::string> backdoor;
  std::vector<std::string> mediators;
  bool ridge_fallback = false;
  double dropped_mass = 0.0;           // stratified mode: share of weight in dropped cells
  bool bootstrapped = false;
  double total_lo = 0.0, total_hi = 0.0;  // seed-resampling spread of the total
};

struct CafeResult {
  InfluenceScore score;
  std::map<std::string, CafeFeatureMeta> meta;
  double tau = 0.0;
  double combined_total = 0.0;
  bool unlearned = false;
};

namespace detail {

struct EstimatePieces {
  double value = 0.0;
  bool ridge = false;
  double dropped_mass = 0.0;
};

/// Regression adjustment: regress model outputs on (f, conditioning set) and
/// scale the f coefficient by the contrast.
inline EstimatePieces regression_estimate(const std::vector<double>& outputs,
                                          const std::vector<double>& f,
                                          const std::vector<const std::vector<double>*>& cond,
                                          double baseline, double treatment) {
  const std::size_t n = outputs.size();
  Matrix X(n, cond.size() + 2);
  for (std::size_t r = 0; r < n; ++r) {
    X.at(r, 0) = 1.0;
    X.at(r, 1) = f[r];
    for (std::size_t j = 0; j < cond.size(); ++j) X.at(r, j + 2) = (*cond[j])[r];
  }
  const auto fit = linalg::ols(X, outputs);
  return {fit.coef[1] * (treatment - baseline), fit.ridge_fallback, 0.0};
}

/// Stratified backdoor sum: cells over the conditioning set (categorical
/// levels verbatim, continuous variables coarsened to deciles), empirical
/// cell weights, and exact-match treatment/baseline arms inside each cell.
/// Cells with a thin arm (< 2 rows) are dropped; losing more than half the
/// mass is an error steering the caller to regression mode.
inline EstimatePieces stratified_estimate(const std::vector<double>& outputs,
                                          const std::vector<double>& f,
                                          const std::vector<const std::vector<double>*>& cond,
                                          const std::vector<const VariableDecl*>& cond_decl,
                                          double baseline, double treatment, int strata_cap,
                                          bool unweighted) {
  const std::size_t n = outputs.size();
  // decile edges per continuous conditioning variable
  std::vector<std::vector<double>> edges(cond.size());
  for (std::size_t j = 0; j < cond.size(); ++j) {
    if (cond_decl[j]->kind == VarKind::Categorical) continue;
    std::vector<double> sorted = *cond[j];
    std::sort(sorted.begin(), sorted.end());
    for (int d = 1; d < 10; ++d)
      edges[j].push_back(sorted[std::min(n - 1, n * static_cast<std::size_t>(d) / 10)]);
  }
  auto cell_of = [&](std::size_t r) {
    std::string key;
    for (std::size_t j = 0; j < cond.size(); ++j) {
      const double v = (*cond[j])[r];
      if (cond_decl[j]->kind == VarKind::Categorical) {
        key += util::format_double(v);
      } else {
        int bin = 0;
        for (double e : edges[j])
          if (v > e) ++bin;
        key += std::to_string(bin);
      }
      key += '|';
    }
    return key;
  };

  struct Cell {
    std::size_t count = 0;
    std::size_t nt = 0, nb = 0;
    double st = 0.0, sb = 0.0;
  };
  std::map<std::string, Cell> cells;
  for (std::size_t r = 0; r < n; ++r) {
    auto& cell = cells[cell_of(r)];
    ++cell.count;
    if (f[r] == treatment) {
      ++cell.nt;
      cell.st += outputs[r];
    } else if (f[r] == baseline) {
      ++cell.nb;
      cell.sb += outputs[r];
    }
  }
  require(cells.size() <= static_cast<std::size_t>(strata_cap), "estimator-degenerate",
          std::to_string(cells.size()) + " strata exceed the cap of " +
              std::to_string(strata_cap) + "; use the regression estimator");

  double kept_mass = 0.0, dropped_mass = 0.0, acc = 0.0;
  for (const auto& [key, cell] : cells) {
    (void)key;
    if (cell.nt < 2 || cell.nb < 2) {
      dropped_mass += static_cast<double>(cell.count);
      continue;
    }
    kept_mass += static_cast<double>(cell.count);
  }
  const double total_mass = kept_mass + dropped_mass;
  require(kept_mass > 0.0 && dropped_mass <= 0.5 * total_mass, "estimator-degenerate",
          "more than half the rows fall in strata without both intervention arms; "
          "use the regression estimator");
  for (const auto& [key, cell] : cells) {
    (void)key;
    if (cell.nt < 2 || cell.nb < 2) continue;
    const double diff = cell.st / static_cast<double>(cell.nt) -
                        cell.sb / static_cast<double>(cell.nb);
    acc += unweighted ? diff : (static_cast<double>(cell.count) / kept_mass) * diff;
  }
  return {acc, false, dropped_mass / total_mass};
}

}  // namespace detail

/// Algorithm-2 estimation: per target feature, identify the backdoor set and
/// the mediators from the graph, estimate the total effect adjusting for the
/// backdoor set, the direct effect additionally conditioning on the
/// mediators, and take the indirect effect as their difference. The verdict
/// compares the summed totals against tau.
inline CafeResult cafe_estimate(const CausalGraph& g, const Dataset& ds,
                                const PredictionModel& model, const UnlearningTarget& target,
                                const CafeConfig& cfg = {}) {
  require(!target.features.empty(), "empty-target", "no target features");
  const Dataset rows = select(ds, target.selector);
  require(rows.n() >= 1, "empty-target", "target selector matches no rows");
  const std::vector<double> outputs = predict_dataset(model, rows);

  CafeResult result;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& name = g.node(static_cast<int>(i)).name;
    if (std::find(target.features.begin(), target.features.end(), name) != target.features.end())
      result.score.features.push_back(name);
  }
  require(result.score.features.size() == target.features.size(), "unknown-node",
          "target names a feature that is not a graph node");

  auto column_ptr = [&](int node, std::vector<std::vector<double>>& store) {
    store.push_back(rows.column_values(static_cast<std::size_t>(rows.column(g.node(node).name))));
    return &store.back();
  };

  for (const auto& name : result.score.features) {
    const int f_node = g.index(name);
    require(f_node != g.outcome(), "bad-target", "outcome cannot be a target feature");
    const auto [baseline, treatment] = cfg.contrast_for(name);

    CafeFeatureMeta meta;
    const auto z_nodes = g.backdoor_set(f_node);
    const auto m_nodes = g.mediators(f_node);
    meta.backdoor = g.names(z_nodes);
    meta.mediators = g.names(m_nodes);

    const auto f_values = rows.column_values(static_cast<std::size_t>(rows.column(name)));
    std::vector<std::vector<double>> store;
    store.reserve(z_nodes.size() + m_nodes.size());
    std::vector<const std::vector<double>*> z_cols, zm_cols;
    std::vector<const VariableDecl*> z_decls, zm_decls;
    for (int z : z_nodes) {
      z_cols.push_back(column_ptr(z, store));
      z_decls.push_back(&g.node(z));
    }
    zm_cols = z_cols;
    zm_decls = z_decls;
    for (int m : m_nodes) {
      zm_cols.push_back(column_ptr(m, store));
      zm_decls.push_back(&g.node(m));
    }

    auto run = [&](const std::vector<const std::vector<double>*>& cond,
                   const std::vector<const VariableDecl*>& decls) {
      if (cfg.estimator == CafeEstimator::Regression)
        return detail::regression_estimate(outputs, f_values, cond, baseline, treatment);
      return detail::stratified_estimate(outputs, f_values, cond, decls, baseline, treatment,
                                         cfg.strata_cap, cfg.unweighted_strata);
    };

    const auto total = run(z_cols, z_decls);
    const auto direct = run(zm_cols, zm_decls);

    auto& e = result.score.effects[name];
    e.total = total.value;
    e.direct = direct.value;
    e.indirect = e.total - e.direct;
    meta.ridge_fallback = total.ridge || direct.ridge;
    meta.dropped_mass = std::max(total.dropped_mass, direct.dropped_mass);
    result.score.instance_count[name] = rows.n();

    if (cfg.bootstrap) {
      meta.bootstrapped = true;
      double lo = 1e300, hi = -1e300;
      const std::size_t n = rows.n();
      for (int b = 0; b < cfg.bootstrap_resamples; ++b) {
        std::vector<double> ro(n), rf(n);
        std::vector<std::vector<double>> rcond(z_cols.size(), std::vector<double>(n));
        for (std::size_t r = 0; r < n; ++r) {
          const auto pick = rng::below(n, cfg.seed, rng::kTagBootstrap,
                                       static_cast<std::uint64_t>(b), r);
          ro[r] = outputs[static_cast<std::size_t>(pick)];
          rf[r] = f_values[static_cast<std::size_t>(pick)];
          for (std::size_t j = 0; j < z_cols.size(); ++j)
            rcond[j][r] = (*z_cols[j])[static_cast<std::size_t>(pick)];
        }
        std::vector<const std::vector<double>*> rptr;
        for (auto& c : rcond) rptr.push_back(&c);
        try {
          const auto rt = cfg.estimator == CafeEstimator::Regression
                              ? detail::regression_estimate(ro, rf, rptr, baseline, treatment)
                              : detail::stratified_estimate(ro, rf, rptr, z_decls, baseline,
                                                            treatment, cfg.strata_cap,
                                                            cfg.unweighted_strata);
          lo = std::min(lo, rt.value);
          hi = std::max(hi, rt.value);
        } catch (const Error&) {
          // degenerate resample: skip, the range reflects the rest
        }
      }
      meta.total_lo = lo;
      meta.total_hi = hi;
    }
    result.meta[name] = std::move(meta);
  }

  if (cfg.tau) {
    result.tau = *cfg.tau;
  } else {
    // 1% of the outcome spread on the audit rows; model-output spread when
    // the audit file carries no outcome column
    std::vector<double> ref;
    if (rows.has_outcome()) {
      ref.resize(rows.n());
      for (std::size_t r = 0; r < rows.n(); ++r) ref[r] = rows.outcome(r);
    } else {
      ref = outputs;
    }
    result.tau = 0.01 * linalg::stddev(ref);
  }
  require(result.tau >= 0.0, "bad-config", "tau must be >= 0");
  result.combined_total = result.score.combined_total();
  result.unlearned = std::fabs(result.combined_total) < result.tau;
  return result;
}

/// Features ordered by descending |total|, ties resolved by declaration
/// order; ranks are 1-based positions in the returned list.
inline std::vector<std::string> rank_features(const InfluenceScore& score) {
  require(!score.features.empty(), "empty-target", "nothing to rank");
  std::vector<std::string> order = score.features;  // declaration order
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    return std::fabs(score.effects.at(a).total) > std::fabs(score.effects.at(b).total);
  });
  return order;
}

inline std::map<std::string, int> feature_ranks(const InfluenceScore& score) {
  const auto order = rank_features(score);
  std::map<std::string, int> ranks;
  for (std::size_t i = 0; i < order.size(); ++i) ranks[order[i]] = static_cast<int>(i) + 1;
  return ranks;
}

struct MultiFeatureResult {
  CafeResult per_feature;
  double combined = 0.0;      // signed sum of per-feature totals
  double sum_abs = 0.0;       // cancellation reference
  bool cancellation = false;  // strong opposing contributions detected
};

/// Joint unlearning check over several features: per-feature scores plus the
/// additive combined total, with a diagnostic when opposing contributions
/// mask each other (|combined| under 10% of the absolute sum).
inline MultiFeatureResult multi_feature_effect(const CausalGraph& g, const Dataset& ds,
                                               const PredictionModel& model,
                                               const std::vector<std::string>& features,
                                               const CafeConfig& cfg = {}) {
  require(features.size() >= 2, "bad-config", "multi-feature analysis needs at least 2 features");
  MultiFeatureResult out;
  UnlearningTarget target;
  target.features = features;
  out.per_feature = cafe_estimate(g, ds, model, target, cfg);
  for (const auto& [name, e] : out.per_feature.score.effects) {
    (void)name;
    out.combined += e.total;
    out.sum_abs += std::fabs(e.total);
  }
  out.cancellation = out.sum_abs > 0.0 && std::fabs(out.combined) < 0.1 * out.sum_abs;
  return out;
}

}  // namespace cafe

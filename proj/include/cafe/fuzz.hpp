#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cafe/dataset.hpp"
#include "cafe/error.hpp"
#include "cafe/graph.hpp"
#include "cafe/model.hpp"
#include "cafe/predicate.hpp"
#include "cafe/rng.hpp"
#include "cafe/sem.hpp"
#include "cafe/util.hpp"

namespace cafe {

enum class Aggregation { Sum, Mean };

/// Knobs for the fuzzing oracle. `samples` is k, the Monte Carlo draws per
/// (instance, feature) pair; fixed-pair contrasts are deterministic so k
/// collapses to one effective sample, and a domain grid replaces k with the
/// grid size.
struct FuzzConfig {
  int samples = 10;
  InterventionStrategy strategy = InterventionStrategy::Empirical;
  int grid_points = 11;
  std::map<std::string, std::pair<double, double>> pairs;  // fixed-pair (baseline, treatment)
  Aggregation aggregation = Aggregation::Mean;
  std::uint64_t seed = 0;
  bool keep_per_instance = false;
  std::size_t path_cap = 10000;

  std::pair<double, double> pair_for(const std::string& feature) const {
    const auto it = pairs.find(feature);
    return it == pairs.end() ? std::pair<double, double>{0.0, 1.0} : it->second;
  }
};

struct FeatureEffect {
  double total = 0.0;
  double direct = 0.0;
  double indirect = 0.0;
};

struct PathScore {
  std::vector<std::string> path;
  double score = 0.0;
};

/// Per-feature influence summary shared by the fuzzer and the fast
/// estimator. The indirect component is always the literal difference
/// total - direct of the sibling fields.
struct InfluenceScore {
  std::vector<std::string> features;                       // target features, declaration order
  std::map<std::string, FeatureEffect> effects;
  std::map<std::string, double> max_abs_delta;             // largest single |dY| seen
  std::map<std::string, std::size_t> instance_count;
  std::map<std::string, std::size_t> samples_per_instance;
  std::map<std::string, std::vector<PathScore>> path_scores;
  std::map<std::string, std::vector<double>> per_instance; // mean dY per instance, on demand

  double combined_total() const {
    double s = 0.0;
    for (const auto& f : features) s += effects.at(f).total;
    return s;
  }
};

namespace detail {

/// Shared context for one fuzzing run: graph-space rows, model column
/// mapping, and the selected instances.
struct FuzzContext {
  const CausalGraph& g;
  const StructuralModelSet& sem;
  const PredictionModel& model;
  Dataset rows;                     // selected audit instances
  std::vector<int> node_col;        // graph node -> dataset column (-1 if absent)
  std::vector<int> model_node;      // model schema position -> graph node
  std::vector<double> baseline;     // model output on the untouched instances
  std::vector<std::vector<double>> base_rows;  // node-space copies

  FuzzContext(const CausalGraph& graph, const StructuralModelSet& mechanisms,
              const PredictionModel& m, const Dataset& ds, const UnlearningTarget& target)
      : g(graph), sem(mechanisms), model(m), rows(select(ds, target.selector)) {
    require(rows.n() >= 1, "empty-target", "target selector matches no rows");
    for (const auto& f : target.features) {
      const int node = g.index(f);
      require(node != g.outcome(), "bad-target", "cannot fuzz the outcome");
    }
    // mechanisms must cover every non-root feature node of this graph
    for (std::size_t i = 0; i < g.size(); ++i) {
      const int v = static_cast<int>(i);
      if (v == g.outcome() || g.parents(v).empty()) continue;
      require(sem.has(v), "sem-mismatch",
              "no structural model for '" + g.node(v).name + "'; fit on this graph first");
    }
    node_col.assign(g.size(), -1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& name = g.node(static_cast<int>(i)).name;
      if (static_cast<int>(i) == g.outcome()) {
        node_col[i] = rows.has_outcome() ? rows.outcome_col() : -1;
        continue;
      }
      try {
        node_col[i] = rows.column(name);
      } catch (const Error&) {
        fail("schema-mismatch", "dataset lacks feature column '" + name + "'");
      }
    }
    for (const auto& name : model.input_schema()) {
      bool found = false;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (g.node(static_cast<int>(i)).name == name) {
          model_node.push_back(static_cast<int>(i));
          found = true;
          break;
        }
      require(found, "schema-mismatch", "model expects unknown feature '" + name + "'");
    }
    base_rows.resize(rows.n());
    Matrix input(rows.n(), model_node.size());
    for (std::size_t r = 0; r < rows.n(); ++r) {
      auto& row = base_rows[r];
      row.assign(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (node_col[i] >= 0) row[i] = rows.cell(r, static_cast<std::size_t>(node_col[i]));
      for (std::size_t j = 0; j < model_node.size(); ++j)
        input.at(r, j) = row[static_cast<std::size_t>(model_node[j])];
    }
    baseline = model.predict(input);
  }

};

inline bool value_changed(const VariableDecl& decl, double now, double before) {
  if (decl.kind == VarKind::Categorical) return now != before;
  return std::fabs(now - before) > 1e-12;
}

}  // namespace detail

/// Total-propagation counterfactual: pins feature f to theta and recomputes,
/// in topological order, every descendant whose parents moved. The intervened
/// feature keeps theta throughout; nodes without mechanisms (roots) and the
/// outcome are never touched.
inline std::vector<double> counterfactual_row(const CausalGraph& g, const StructuralModelSet& sem,
                                              const std::vector<double>& base, int f,
                                              double theta) {
  std::vector<double> out = base;
  out[static_cast<std::size_t>(f)] = theta;
  std::vector<char> is_desc(g.size(), 0);
  for (int d : g.descendants(f)) is_desc[static_cast<std::size_t>(d)] = 1;
  std::vector<double> parent_values;
  for (int v : g.topological_order()) {
    if (v == f || v == g.outcome() || !is_desc[static_cast<std::size_t>(v)]) continue;
    if (!sem.has(v)) continue;
    const auto& m = sem.at(v);
    bool changed = false;
    for (int p : m.parents)
      changed = changed || detail::value_changed(g.node(p), out[static_cast<std::size_t>(p)],
                                                 base[static_cast<std::size_t>(p)]);
    if (!changed) continue;
    parent_values.clear();
    for (int p : m.parents) parent_values.push_back(out[static_cast<std::size_t>(p)]);
    out[static_cast<std::size_t>(v)] = m.predict(parent_values);
  }
  return out;
}

/// Direct-only counterfactual: only the intervened feature moves.
inline std::vector<double> counterfactual_row_direct(const std::vector<double>& base, int f,
                                                     double theta) {
  std::vector<double> out = base;
  out[static_cast<std::size_t>(f)] = theta;
  return out;
}

/// Path-specific counterfactual: recomputes only the interior nodes of one
/// directed path, holding every other descendant at its observed value.
inline std::vector<double> counterfactual_row_path(const CausalGraph& g,
                                                   const StructuralModelSet& sem,
                                                   const std::vector<double>& base,
                                                   const std::vector<int>& path, double theta) {
  std::vector<double> out = base;
  out[static_cast<std::size_t>(path[0])] = theta;
  std::vector<double> parent_values;
  for (std::size_t k = 1; k + 1 < path.size(); ++k) {
    const int v = path[k];
    require(sem.has(v), "sem-mismatch", "no structural model for path node '" + g.node(v).name + "'");
    const auto& m = sem.at(v);
    bool changed = false;
    for (int p : m.parents)
      changed = changed || detail::value_changed(g.node(p), out[static_cast<std::size_t>(p)],
                                                 base[static_cast<std::size_t>(p)]);
    if (!changed) continue;
    parent_values.clear();
    for (int p : m.parents) parent_values.push_back(out[static_cast<std::size_t>(p)]);
    out[static_cast<std::size_t>(v)] = m.predict(parent_values);
  }
  return out;
}

namespace detail {

enum class PropagationMode { Total, Direct, Path };

/// One fuzzing pass: accumulates dY over every (instance, feature, sample)
/// triple. Work is chunked at a fixed size so sums reduce in the same order
/// regardless of worker count.
inline double fuzz_one_feature(const FuzzContext& ctx, const FuzzConfig& cfg, int f_node,
                               PropagationMode mode, const std::vector<int>* path,
                               double& max_abs, std::vector<double>* per_instance,
                               std::size_t& samples_out) {
  const auto& g = ctx.g;
  const std::size_t n = ctx.rows.n();
  const auto& decl = g.node(f_node);
  const std::vector<double> observed =
      ctx.rows.column_values(static_cast<std::size_t>(ctx.node_col[static_cast<std::size_t>(f_node)]));

  std::vector<double> grid;
  std::pair<double, double> arm{0.0, 1.0};
  std::size_t k = static_cast<std::size_t>(cfg.samples);
  require(cfg.samples >= 1, "bad-config", "samples must be >= 1");
  if (cfg.strategy == InterventionStrategy::DomainGrid) {
    grid = intervention_grid(decl, cfg.grid_points);
    k = grid.size();
  } else if (cfg.strategy == InterventionStrategy::FixedPair) {
    arm = cfg.pair_for(decl.name);
    k = 1;
  }
  samples_out = k;

  auto counterfactual = [&](const std::vector<double>& base, double theta) {
    switch (mode) {
      case PropagationMode::Total: return counterfactual_row(g, ctx.sem, base, f_node, theta);
      case PropagationMode::Direct: return counterfactual_row_direct(base, f_node, theta);
      case PropagationMode::Path: return counterfactual_row_path(g, ctx.sem, base, *path, theta);
    }
    return base;
  };

  constexpr std::size_t kChunk = 512;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> chunk_sum(chunks, 0.0), chunk_max(chunks, 0.0);
  if (per_instance) per_instance->assign(n, 0.0);

  const bool paired = cfg.strategy == InterventionStrategy::FixedPair;
  const std::size_t width = ctx.model_node.size();

  util::parallel_for(chunks, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t c = cb; c < ce; ++c) {
      const std::size_t rb = c * kChunk, re = std::min(n, rb + kChunk);
      // one prediction batch per chunk: every counterfactual row of every
      // instance, in deterministic (instance, sample[, arm]) order
      Matrix batch((re - rb) * k * (paired ? 2 : 1), width);
      std::size_t row_out = 0;
      auto emit = [&](const std::vector<double>& node_row) {
        auto dst = batch.row(row_out++);
        for (std::size_t j = 0; j < width; ++j)
          dst[j] = node_row[static_cast<std::size_t>(ctx.model_node[j])];
      };
      for (std::size_t r = rb; r < re; ++r) {
        const auto& base = ctx.base_rows[r];
        const std::uint64_t row_key = ctx.rows.row_index()[r];
        for (std::size_t s = 0; s < k; ++s) {
          if (paired) {
            emit(counterfactual(base, arm.first));
            emit(counterfactual(base, arm.second));
          } else {
            const double theta =
                cfg.strategy == InterventionStrategy::DomainGrid
                    ? grid[s]
                    : sample_intervention_empirical(observed, cfg.seed, row_key,
                                                    static_cast<std::uint64_t>(f_node), s);
            emit(counterfactual(base, theta));
          }
        }
      }
      const std::vector<double> preds = ctx.model.predict(batch);

      double acc = 0.0, mx = 0.0;
      std::size_t p = 0;
      for (std::size_t r = rb; r < re; ++r) {
        double inst = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
          double delta = 0.0;
          if (paired) {
            const double lo = preds[p++];
            const double hi = preds[p++];
            delta = hi - lo;
          } else {
            delta = preds[p++] - ctx.baseline[r];
          }
          acc += delta;
          inst += delta;
          mx = std::max(mx, std::fabs(delta));
        }
        if (per_instance)
          (*per_instance)[r] = inst / static_cast<double>(k);
      }
      chunk_sum[c] = acc;
      chunk_max[c] = mx;
    }
  });

  double sum = 0.0;
  max_abs = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    sum += chunk_sum[c];
    max_abs = std::max(max_abs, chunk_max[c]);
  }
  if (cfg.aggregation == Aggregation::Mean)
    sum /= static_cast<double>(n) * static_cast<double>(k);
  return sum;
}

inline InfluenceScore fuzz_run(const CausalGraph& g, const StructuralModelSet& sem,
                               const PredictionModel& model, const Dataset& ds,
                               const UnlearningTarget& target, const FuzzConfig& cfg,
                               PropagationMode mode) {
  require(!target.features.empty(), "empty-target", "no target features");
  FuzzContext ctx(g, sem, model, ds, target);
  InfluenceScore score;
  // declaration order, regardless of how the target listed them
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& name = g.node(static_cast<int>(i)).name;
    if (std::find(target.features.begin(), target.features.end(), name) != target.features.end())
      score.features.push_back(name);
  }
  require(score.features.size() == target.features.size(), "unknown-node",
          "target names a feature that is not a graph node");
  for (const auto& name : score.features) {
    const int f = g.index(name);
    double max_abs = 0.0;
    std::size_t k = 0;
    std::vector<double> per_instance;
    const double v = fuzz_one_feature(ctx, cfg, f, mode, nullptr, max_abs,
                                      cfg.keep_per_instance ? &per_instance : nullptr, k);
    auto& e = score.effects[name];
    if (mode == PropagationMode::Direct)
      e.direct = v;
    else
      e.total = v;
    score.max_abs_delta[name] = max_abs;
    score.instance_count[name] = ctx.rows.n();
    score.samples_per_instance[name] = k;
    if (cfg.keep_per_instance) score.per_instance[name] = std::move(per_instance);
  }
  return score;
}

}  // namespace detail

/// Algorithm-1 fuzzing with full propagation: the total causal influence of
/// each target feature on the model output.
inline InfluenceScore fuzz(const CausalGraph& g, const StructuralModelSet& sem,
                           const PredictionModel& model, const Dataset& ds,
                           const UnlearningTarget& target, const FuzzConfig& cfg = {}) {
  return detail::fuzz_run(g, sem, model, ds, target, cfg, detail::PropagationMode::Total);
}

/// Direct-only variant: the intervention is applied without propagating to
/// descendants, isolating influence that bypasses every mediator.
inline InfluenceScore fuzz_direct(const CausalGraph& g, const StructuralModelSet& sem,
                                  const PredictionModel& model, const Dataset& ds,
                                  const UnlearningTarget& target, const FuzzConfig& cfg = {}) {
  return detail::fuzz_run(g, sem, model, ds, target, cfg, detail::PropagationMode::Direct);
}

/// Path-specific variant: per path, propagation runs only along that path's
/// interior nodes. Every path must start at a target feature and follow graph
/// edges into the outcome.
inline InfluenceScore fuzz_paths(const CausalGraph& g, const StructuralModelSet& sem,
                                 const PredictionModel& model, const Dataset& ds,
                                 const UnlearningTarget& target, const PathSet& paths,
                                 const FuzzConfig& cfg = {}) {
  require(!paths.paths.empty(), "invalid-path", "path-specific fuzzing needs a nonempty path set");
  detail::FuzzContext ctx(g, sem, model, ds, target);
  InfluenceScore score;
  score.features = target.features;
  for (const auto& path_names : paths.paths) {
    require(path_names.size() >= 2, "invalid-path", "a path needs at least two nodes");
    std::vector<int> path;
    for (const auto& nm : path_names) path.push_back(g.index(nm));
    require(path.back() == g.outcome(), "invalid-path", "path must end at the outcome");
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
      require(g.has_edge(path[i], path[i + 1]), "invalid-path",
              "no edge " + path_names[i] + " -> " + path_names[i + 1]);
    const auto& src = path_names.front();
    require(std::find(target.features.begin(), target.features.end(), src) !=
                target.features.end(),
            "invalid-path", "path source '" + src + "' is not a target feature");
    double max_abs = 0.0;
    std::size_t k = 0;
    const double v = detail::fuzz_one_feature(ctx, cfg, path.front(),
                                              detail::PropagationMode::Path, &path, max_abs,
                                              nullptr, k);
    score.path_scores[src].push_back({path_names, v});
    score.max_abs_delta[src] = std::max(score.max_abs_delta[src], max_abs);
    score.instance_count[src] = ctx.rows.n();
    score.samples_per_instance[src] = k;
  }
  return score;
}

/// Convenience pass computing total and direct in one call; the indirect
/// component is their exact difference.
inline InfluenceScore fuzz_effects(const CausalGraph& g, const StructuralModelSet& sem,
                                   const PredictionModel& model, const Dataset& ds,
                                   const UnlearningTarget& target, const FuzzConfig& cfg = {}) {
  InfluenceScore total = fuzz(g, sem, model, ds, target, cfg);
  const InfluenceScore direct = fuzz_direct(g, sem, model, ds, target, cfg);
  for (auto& [name, e] : total.effects) {
    e.direct = direct.effects.at(name).direct;
    e.indirect = e.total - e.direct;
    total.max_abs_delta[name] =
        std::max(total.max_abs_delta[name], direct.max_abs_delta.at(name));
  }
  return total;
}

}  // namespace cafe

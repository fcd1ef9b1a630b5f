#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cafe/baselines.hpp"
#include "cafe/error.hpp"
#include "cafe/estimator.hpp"
#include "cafe/fuzz.hpp"
#include "cafe/graph.hpp"
#include "cafe/rng.hpp"
#include "cafe/util.hpp"

namespace cafe {

/// Graph mis-specification protocol: structural edits that always preserve
/// acyclicity by only placing edges forward in a fixed topological order.
struct PerturbationSpec {
  enum Kind { AddEdges, RemoveEdges, FullyConnect } kind = AddEdges;
  double fraction = 0.5;  // share of |E| to add or remove
  std::uint64_t seed = 0;
};

inline PerturbationSpec::Kind perturbation_kind_from_string(const std::string& s) {
  if (s == "add") return PerturbationSpec::AddEdges;
  if (s == "remove") return PerturbationSpec::RemoveEdges;
  if (s == "full") return PerturbationSpec::FullyConnect;
  fail("bad-config", "unknown perturbation kind '" + s + "' (add|remove|full)");
}

inline CausalGraph perturb_graph(const CausalGraph& g, const PerturbationSpec& spec) {
  if (spec.kind != PerturbationSpec::FullyConnect)
    require(spec.fraction > 0.0 && spec.fraction <= 1.0, "bad-config",
            "fraction must be in (0, 1]");
  const auto order = g.topological_order();
  std::vector<int> pos(g.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    pos[static_cast<std::size_t>(order[k])] = static_cast<int>(k);

  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto& [p, c] : g.edges()) edges.emplace_back(g.node(p).name, g.node(c).name);

  auto edge_names = [&](int p, int c) {
    return std::make_pair(g.node(p).name, g.node(c).name);
  };

  if (spec.kind == PerturbationSpec::FullyConnect) {
    edges.clear();
    for (std::size_t i = 0; i < order.size(); ++i)
      for (std::size_t j = i + 1; j < order.size(); ++j)
        edges.push_back(edge_names(order[i], order[j]));
  } else if (spec.kind == PerturbationSpec::AddEdges) {
    std::vector<std::pair<std::string, std::string>> absent;
    for (std::size_t i = 0; i < order.size(); ++i)
      for (std::size_t j = i + 1; j < order.size(); ++j)
        if (!g.has_edge(order[i], order[j])) absent.push_back(edge_names(order[i], order[j]));
    require(!absent.empty(), "already-complete", "no forward edge left to add");
    const std::size_t want = std::min<std::size_t>(
        absent.size(),
        static_cast<std::size_t>(std::ceil(spec.fraction * static_cast<double>(g.edges().size()))));
    // deterministic partial shuffle, then take the head
    for (std::size_t i = absent.size(); i-- > 1;) {
      const auto j = rng::below(i + 1, spec.seed, rng::kTagPerturb, 1, i);
      std::swap(absent[i], absent[static_cast<std::size_t>(j)]);
    }
    for (std::size_t k = 0; k < want; ++k) edges.push_back(absent[k]);
  } else {
    const std::size_t want = std::min<std::size_t>(
        edges.size(),
        static_cast<std::size_t>(std::ceil(spec.fraction * static_cast<double>(g.edges().size()))));
    std::vector<std::size_t> idx(edges.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i-- > 1;) {
      const auto j = rng::below(i + 1, spec.seed, rng::kTagPerturb, 2, i);
      std::swap(idx[i], idx[static_cast<std::size_t>(j)]);
    }
    // removal order is the shuffled list; skip removals that would leave the
    // outcome with no incoming edge at all
    std::vector<char> removed(edges.size(), 0);
    std::size_t done = 0;
    const auto& outcome_name = g.outcome_name();
    auto outcome_indegree = [&] {
      std::size_t d = 0;
      for (std::size_t i = 0; i < edges.size(); ++i)
        if (!removed[i] && edges[i].second == outcome_name) ++d;
      return d;
    };
    for (std::size_t k = 0; k < idx.size() && done < want; ++k) {
      const std::size_t e = idx[k];
      if (edges[e].second == outcome_name && outcome_indegree() <= 1) continue;
      removed[e] = 1;
      ++done;
    }
    std::vector<std::pair<std::string, std::string>> kept;
    for (std::size_t i = 0; i < edges.size(); ++i)
      if (!removed[i]) kept.push_back(edges[i]);
    edges = std::move(kept);
  }
  return CausalGraph(g.nodes(), edges, g.outcome_name());
}

/// Share of features whose rank differs between estimates under two graphs,
/// as a percentage of the feature count.
inline double rank_change(const CausalGraph& g, const CausalGraph& g_alt, const Dataset& ds,
                          const PredictionModel& model, const CafeConfig& cfg = {}) {
  require(g.size() == g_alt.size(), "bad-config", "graphs must share the node set");
  for (std::size_t i = 0; i < g.size(); ++i)
    require(g.node(static_cast<int>(i)).name == g_alt.node(static_cast<int>(i)).name,
            "bad-config", "graphs must share the node set");
  UnlearningTarget t;
  t.features = g.feature_names();
  const auto ra = feature_ranks(cafe_estimate(g, ds, model, t, cfg).score);
  const auto rb = feature_ranks(cafe_estimate(g_alt, ds, model, t, cfg).score);
  std::size_t changed = 0;
  for (const auto& [name, rank] : ra)
    if (rb.at(name) != rank) ++changed;
  return 100.0 * static_cast<double>(changed) / static_cast<double>(ra.size());
}

struct BenchmarkEntry {
  double median_seconds = 0.0;
  std::vector<double> runs;
};

/// Wall-time comparison of the three estimation routes over the full feature
/// set. One warmup run is discarded, the median of `repeats` timed runs is
/// reported, and everything executes on a single worker so the numbers do
/// not depend on scheduler contention.
inline std::map<std::string, BenchmarkEntry> benchmark(const CausalGraph& g,
                                                       const StructuralModelSet& sem,
                                                       const Dataset& ds,
                                                       const PredictionModel& model,
                                                       int repeats = 5,
                                                       int fuzz_samples = 10) {
  require(repeats >= 3, "bad-config", "benchmark needs at least 3 repeats");
  util::ThreadPin pin(1);
  UnlearningTarget t;
  t.features = g.feature_names();

  FuzzConfig fuzz_cfg;
  fuzz_cfg.samples = fuzz_samples;
  CafeConfig cafe_cfg;

  std::map<std::string, std::function<void()>> methods;
  methods["cafe"] = [&] { cafe_estimate(g, ds, model, t, cafe_cfg); };
  methods["fuzz"] = [&] { fuzz(g, sem, model, ds, t, fuzz_cfg); };
  methods["perm"] = [&] {
    for (const auto& f : t.features)
      permutation_importance(ds, model, f, PermMetric::Rmse, 0, 5);
  };

  std::map<std::string, BenchmarkEntry> out;
  for (auto& [name, fn] : methods) {
    fn();  // warmup, excluded
    BenchmarkEntry entry;
    for (int r = 0; r < repeats; ++r) {
      util::Stopwatch sw;
      fn();
      entry.runs.push_back(sw.seconds());
    }
    auto sorted = entry.runs;
    std::sort(sorted.begin(), sorted.end());
    entry.median_seconds = sorted[sorted.size() / 2];
    out[name] = std::move(entry);
  }
  return out;
}

}  // namespace cafe

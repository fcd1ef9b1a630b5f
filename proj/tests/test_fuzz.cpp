#include <doctest.h>

#include <cmath>

#include "cafe/fuzz.hpp"
#include "cafe/linalg.hpp"
#include "helpers.hpp"

using cafe::BuiltinModel;
using cafe::Error;
using cafe::FuzzConfig;
using cafe::InterventionStrategy;
using cafe::UnlearningTarget;

namespace {

struct HeartRig {
  cafe::GeneratorSpec spec;
  cafe::Dataset ds;
  cafe::StructuralModelSet sem;
  std::shared_ptr<cafe::BuiltinModel> oracle_model;  // exact outcome coefficients

  explicit HeartRig(double sigma, std::size_t n = 2000, std::uint64_t seed = 7)
      : spec(testutil::heart_spec(n, seed, sigma)), ds(cafe::generate(spec)),
        sem(cafe::fit_sem(spec.graph, ds)),
        oracle_model(BuiltinModel::linear(spec.graph.feature_names(),
                                          {{"blood_pressure", 0.5}, {"bmi", 1.0}}, 0.0)) {}
};

UnlearningTarget all_rows(std::initializer_list<std::string> features) {
  UnlearningTarget t;
  t.features = features;
  return t;
}

}  // namespace

TEST_SUITE("fuzz") {

TEST_CASE("consistency: intervening with the observed value changes nothing") {
  HeartRig rig(1.0, 500);
  const auto& g = rig.spec.graph;
  for (std::size_t r = 0; r < 100; ++r) {
    std::vector<double> base(g.size());
    for (std::size_t c = 0; c < g.size(); ++c) base[c] = rig.ds.cell(r, c);
    for (const char* f : {"smoking", "exercise", "blood_pressure", "bmi"}) {
      const int fi = g.index(f);
      const auto cf = cafe::counterfactual_row(g, rig.sem, base, fi,
                                               base[static_cast<std::size_t>(fi)]);
      CHECK(cf == base);  // exact: no parent moves, so nothing recomputes
    }
  }
}

TEST_CASE("noiseless heart with exact model: fixed-pair total equals the path products") {
  HeartRig rig(0.0, 1000);
  FuzzConfig cfg;
  cfg.strategy = InterventionStrategy::FixedPair;
  cfg.aggregation = cafe::Aggregation::Mean;
  const auto score = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                all_rows({"smoking"}), cfg);
  CHECK(score.effects.at("smoking").total == doctest::Approx(7.0).epsilon(1e-6));
}

TEST_CASE("noisy heart with exact model: per-pair total within 0.1 of 7") {
  HeartRig rig(1.0, 10000);
  FuzzConfig cfg;
  cfg.strategy = InterventionStrategy::FixedPair;
  const auto score = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                all_rows({"smoking"}), cfg);
  CHECK(std::fabs(score.effects.at("smoking").total - 7.0) < 0.1);
}

TEST_CASE("unread feature with no descendants contributes exactly zero") {
  // add an isolated feature to the heart graph
  auto nodes = testutil::heart_graph().nodes();
  nodes.insert(nodes.begin() + 2, testutil::continuous("shoe_size", 0, 20));
  cafe::CausalGraph g(nodes,
                      {{"smoking", "blood_pressure"},
                       {"smoking", "bmi"},
                       {"exercise", "bmi"},
                       {"blood_pressure", "risk"},
                       {"bmi", "risk"}},
                      "risk");
  // dataset: generate heart, then splice a shoe_size column
  auto spec = testutil::heart_spec(500, 3);
  const auto heart = cafe::generate(spec);
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < 2; ++c) cols.push_back(heart.storage()->cols[c]);
  std::vector<double> shoe(heart.n());
  for (std::size_t r = 0; r < heart.n(); ++r) shoe[r] = cafe::rng::u01(1, 9, r) * 20;
  cols.push_back(shoe);
  for (std::size_t c = 2; c < 5; ++c) cols.push_back(heart.storage()->cols[c]);
  const auto ds = cafe::Dataset::from_columns(g.nodes(), std::move(cols), 5);

  const auto sem = cafe::fit_sem(g, ds);
  const auto model =
      BuiltinModel::linear(g.feature_names(), {{"blood_pressure", 0.5}, {"bmi", 1.0}}, 0.0);
  FuzzConfig cfg;
  cfg.samples = 5;
  const auto score = cafe::fuzz(g, sem, *model, ds, all_rows({"shoe_size"}), cfg);
  CHECK(score.effects.at("shoe_size").total == 0.0);
  CHECK(score.max_abs_delta.at("shoe_size") == 0.0);
}

TEST_CASE("direct-only fuzzing isolates the unmediated component") {
  HeartRig rig(1.0, 4000);
  FuzzConfig cfg;
  cfg.strategy = InterventionStrategy::FixedPair;

  // the oracle model never reads smoking, so its direct effect is exactly 0
  const auto s = cafe::fuzz_direct(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                   all_rows({"smoking"}), cfg);
  CHECK(s.effects.at("smoking").direct == 0.0);

  // blood pressure has only the direct edge, worth exactly its coefficient
  const auto b = cafe::fuzz_direct(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                   all_rows({"blood_pressure"}), cfg);
  CHECK(b.effects.at("blood_pressure").direct == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("model trained without the feature shows zero direct effect per instance") {
  HeartRig rig(1.0, 3000);
  const auto trained = BuiltinModel::train(cafe::ModelKind::Linear, rig.ds,
                                           {"exercise", "blood_pressure", "bmi"});
  FuzzConfig cfg;
  cfg.samples = 4;
  cfg.keep_per_instance = true;
  const auto s = cafe::fuzz_direct(rig.spec.graph, rig.sem, *trained, rig.ds,
                                   all_rows({"smoking"}), cfg);
  CHECK(s.effects.at("smoking").direct == 0.0);
  CHECK(s.max_abs_delta.at("smoking") == 0.0);
  for (double v : s.per_instance.at("smoking")) CHECK(v == 0.0);
}

TEST_CASE("path-specific scores match per-path coefficient products") {
  HeartRig rig(0.0, 2000);
  FuzzConfig cfg;
  cfg.strategy = InterventionStrategy::FixedPair;
  cafe::PathSet paths;
  paths.paths = {{"smoking", "blood_pressure", "risk"}, {"smoking", "bmi", "risk"}};
  const auto s = cafe::fuzz_paths(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                  all_rows({"smoking"}), paths, cfg);
  const auto& ps = s.path_scores.at("smoking");
  REQUIRE(ps.size() == 2);
  CHECK(ps[0].score == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(ps[1].score == doctest::Approx(2.0).epsilon(1e-6));

  // path additivity on a linear system
  const auto total = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                all_rows({"smoking"}), cfg);
  CHECK(ps[0].score + ps[1].score ==
        doctest::Approx(total.effects.at("smoking").total).epsilon(0.02));
}

TEST_CASE("invalid paths are rejected") {
  HeartRig rig(1.0, 300);
  FuzzConfig cfg;
  cafe::PathSet bad_edge;
  bad_edge.paths = {{"smoking", "exercise", "risk"}};
  CHECK_THROWS_WITH_AS(cafe::fuzz_paths(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                        all_rows({"smoking"}), bad_edge, cfg),
                       doctest::Contains("invalid-path"), Error);
  cafe::PathSet wrong_source;
  wrong_source.paths = {{"bmi", "risk"}};
  CHECK_THROWS_WITH_AS(cafe::fuzz_paths(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                        all_rows({"smoking"}), wrong_source, cfg),
                       doctest::Contains("invalid-path"), Error);
}

TEST_CASE("indirect is exactly total minus direct") {
  HeartRig rig(1.0, 1000);
  FuzzConfig cfg;
  cfg.samples = 3;
  const auto s = cafe::fuzz_effects(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                    all_rows({"smoking", "bmi"}), cfg);
  for (const auto& f : s.features) {
    const auto& e = s.effects.at(f);
    CHECK(e.indirect == e.total - e.direct);
  }
}

TEST_CASE("empirical sampling variance shrinks like 1/k") {
  HeartRig rig(1.0, 200);
  auto variance_at = [&](int k) {
    std::vector<double> scores;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      FuzzConfig cfg;
      cfg.samples = k;
      cfg.seed = seed;
      const auto s = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                                all_rows({"smoking"}), cfg);
      scores.push_back(s.effects.at("smoking").total);
    }
    const double sd = cafe::linalg::stddev(scores);
    return sd * sd;
  };
  const double v1 = variance_at(1), v10 = variance_at(10), v100 = variance_at(100);
  CHECK(v1 > 2.5 * v10);
  CHECK(v10 > 2.5 * v100);
  CHECK(v1 < 40.0 * v10);
}

TEST_CASE("sum aggregation is mean times pair count times samples") {
  HeartRig rig(1.0, 400);
  FuzzConfig mean_cfg;
  mean_cfg.samples = 5;
  FuzzConfig sum_cfg = mean_cfg;
  sum_cfg.aggregation = cafe::Aggregation::Sum;
  const auto m = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                            all_rows({"smoking"}), mean_cfg);
  const auto s = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds,
                            all_rows({"smoking"}), sum_cfg);
  CHECK(s.effects.at("smoking").total ==
        doctest::Approx(m.effects.at("smoking").total * 400 * 5).epsilon(1e-9));
}

TEST_CASE("worker count does not change the result") {
  HeartRig rig(1.0, 700);
  FuzzConfig cfg;
  cfg.samples = 7;
  cfg.seed = 5;
  double one, four;
  {
    cafe::util::ThreadPin pin(1);
    one = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds, all_rows({"smoking"}),
                     cfg)
              .effects.at("smoking")
              .total;
  }
  {
    cafe::util::ThreadPin pin(4);
    four = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds, all_rows({"smoking"}),
                      cfg)
               .effects.at("smoking")
               .total;
  }
  CHECK(one == four);
}

TEST_CASE("subgroup targets restrict the fuzzed instances") {
  HeartRig rig(1.0, 1000);
  UnlearningTarget t;
  t.features = {"smoking"};
  t.selector = cafe::parse_predicate("exercise=1");
  FuzzConfig cfg;
  cfg.strategy = InterventionStrategy::FixedPair;
  const auto s = cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds, t, cfg);
  CHECK(s.instance_count.at("smoking") < 700);
  CHECK(s.instance_count.at("smoking") > 300);
  CHECK(std::fabs(s.effects.at("smoking").total - 7.0) < 0.2);
}

TEST_CASE("errors: empty target, unknown feature, sem mismatch") {
  HeartRig rig(1.0, 300);
  FuzzConfig cfg;
  UnlearningTarget empty;
  CHECK_THROWS_WITH_AS(
      cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds, empty, cfg),
      doctest::Contains("empty-target"), Error);

  UnlearningTarget unknown;
  unknown.features = {"nope"};
  CHECK_THROWS_WITH_AS(
      cafe::fuzz(rig.spec.graph, rig.sem, *rig.oracle_model, rig.ds, unknown, cfg),
      doctest::Contains("unknown-node"), Error);

  cafe::StructuralModelSet empty_sem;
  CHECK_THROWS_WITH_AS(cafe::fuzz(rig.spec.graph, empty_sem, *rig.oracle_model, rig.ds,
                                  all_rows({"smoking"}), cfg),
                       doctest::Contains("sem-mismatch"), Error);
}

}  // TEST_SUITE

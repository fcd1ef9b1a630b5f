#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "cafe/sem.hpp"
#include "cafe/synth.hpp"
#include "helpers.hpp"

using cafe::Error;
using cafe::GeneratorSpec;

TEST_SUITE("synth") {

TEST_CASE("OLS refit recovers the generating coefficients within 2%") {
  auto spec = testutil::heart_spec(10000, 7);
  const auto ds = cafe::generate(spec);
  const auto sem = cafe::fit_sem(spec.graph, ds);
  const auto& mb = sem.at(spec.graph.index("blood_pressure"));
  CHECK(std::fabs(mb.coef[0] - 10.0) / 10.0 < 0.02);
  const auto& mm = sem.at(spec.graph.index("bmi"));
  CHECK(std::fabs(mm.coef[0] - 2.0) / 2.0 < 0.02);
  CHECK(std::fabs(mm.coef[1] - (-3.0)) / 3.0 < 0.02);
}

TEST_CASE("noiseless generation satisfies the equations exactly") {
  auto spec = testutil::heart_spec(200, 5, /*sigma=*/0.0);
  const auto ds = cafe::generate(spec);
  for (std::size_t r = 0; r < ds.n(); ++r) {
    const double s = ds.cell(r, 0), e = ds.cell(r, 1), b = ds.cell(r, 2), m = ds.cell(r, 3),
                 y = ds.cell(r, 4);
    CHECK(b == doctest::Approx(10 * s).epsilon(1e-12));
    CHECK(m == doctest::Approx(2 * s - 3 * e).epsilon(1e-12));
    CHECK(y == doctest::Approx(0.5 * b + 1.0 * m).epsilon(1e-12));
  }
}

TEST_CASE("n=1 and determinism under seed") {
  auto spec = testutil::heart_spec(1, 42);
  const auto ds = cafe::generate(spec);
  CHECK(ds.n() == 1);
  const auto ds2 = cafe::generate(spec);
  for (std::size_t c = 0; c < 5; ++c) CHECK(ds.cell(0, c) == ds2.cell(0, c));
}

TEST_CASE("ground truth effects follow the path products") {
  auto spec = testutil::heart_spec(10, 1);
  const auto effects = cafe::ground_truth_effects(spec);

  const auto s = effects.at("smoking");
  CHECK(s.total == doctest::Approx(7.0));
  CHECK(s.direct == 0.0);
  CHECK(s.indirect == doctest::Approx(7.0));

  const auto e = effects.at("exercise");
  CHECK(e.total == doctest::Approx(-3.0));
  CHECK(e.direct == 0.0);

  const auto b = effects.at("blood_pressure");
  CHECK(b.total == doctest::Approx(0.5));
  CHECK(b.direct == doctest::Approx(0.5));
  CHECK(b.indirect == 0.0);

  CHECK(cafe::ground_truth_effect(spec, "not_a_node").total == 0.0);
  CHECK(cafe::ground_truth_effect(spec, "not_a_node").direct == 0.0);
}

TEST_CASE("total equals direct plus indirect exactly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GeneratorSpec spec;
    spec.graph = testutil::random_dag(seed, 4 + static_cast<int>(seed % 4));
    for (std::size_t i = 0; i < spec.graph.size(); ++i) {
      const int v = static_cast<int>(i);
      if (spec.graph.parents(v).empty()) {
        spec.roots[v] = {cafe::RootDistribution::Uniform, 0, 0, 1};
      } else {
        cafe::NodeEquation eq;
        for (int p : spec.graph.parents(v))
          eq.terms.push_back({p, (cafe::rng::u01(seed, 91, i, static_cast<std::uint64_t>(p)) - 0.5) * 4.0});
        eq.sigma = 0.1;
        spec.equations[v] = eq;
      }
    }
    const auto effects = cafe::ground_truth_effects(spec);
    for (const auto& [name, e] : effects) CHECK(e.indirect == e.total - e.direct);
  }
}

TEST_CASE("gated specs demand a gate assignment") {
  cafe::GeneratorSpec spec;
  spec.graph = cafe::CausalGraph({testutil::binary("s"), testutil::continuous("age", 20, 80),
                                  testutil::continuous("m", -20, 20),
                                  testutil::continuous("y", -50, 50)},
                                 {{"s", "m"}, {"m", "y"}, {"age", "y"}}, "y");
  const int S = spec.graph.index("s"), A = spec.graph.index("age"), M = spec.graph.index("m"),
            Y = spec.graph.index("y");
  spec.roots[S] = {cafe::RootDistribution::Bernoulli, 0.5, 0, 1};
  spec.roots[A] = {cafe::RootDistribution::Uniform, 0, 20, 80};
  spec.equations[M] = {0.0, {{S, 2.0}}, 1.0};
  cafe::NodeEquation ry;
  ry.terms.push_back({M, 0.5});
  cafe::EquationTerm gated{M, 2.0, A, 50.0};
  ry.terms.push_back(gated);
  ry.terms.push_back({A, 0.01});
  spec.equations[Y] = ry;

  CHECK_THROWS_WITH_AS(cafe::ground_truth_effects(spec), doctest::Contains("nonlinear-spec"),
                       Error);

  const auto young = cafe::ground_truth_effects(spec, {{A, false}});
  CHECK(young.at("s").total == doctest::Approx(2.0 * 0.5));
  const auto old = cafe::ground_truth_effects(spec, {{A, true}});
  CHECK(old.at("s").total == doctest::Approx(2.0 * 2.5));
}

TEST_CASE("spec validation rejects malformed documents") {
  auto spec = testutil::heart_spec(10, 1);
  auto j = spec.to_json();
  const auto round = GeneratorSpec::from_json(j);
  CHECK(round.to_json() == j);

  auto missing_eq = j;
  missing_eq["equations"].erase("risk");
  CHECK_THROWS_WITH_AS(GeneratorSpec::from_json(missing_eq), doctest::Contains("bad-spec"), Error);

  auto bad_sigma = j;
  bad_sigma["equations"]["risk"]["sigma"] = -1.0;
  CHECK_THROWS_WITH_AS(GeneratorSpec::from_json(bad_sigma), doctest::Contains("bad-spec"), Error);

  auto alien_parent = j;
  alien_parent["equations"]["risk"]["terms"].push_back({{"parent", "exercise"}, {"coef", 1.0}});
  CHECK_THROWS_WITH_AS(GeneratorSpec::from_json(alien_parent), doctest::Contains("bad-spec"),
                       Error);
}

TEST_CASE("shipped heart spec: smoking carries the largest absolute total") {
  const auto spec = cafe::load_generator_spec("specs/heart.json");
  const auto effects = cafe::ground_truth_effects(spec);
  const double smoking = std::fabs(effects.at("smoking").total);
  for (const auto& [name, e] : effects)
    if (name != "smoking") CHECK(smoking > std::fabs(e.total));
}

TEST_CASE("shipped performance spec: experience ranks 3rd of 4 by absolute total") {
  const auto spec = cafe::load_generator_spec("specs/performance.json");
  const auto effects = cafe::ground_truth_effects(spec);
  REQUIRE(effects.size() == 4);
  int better = 0;
  const double x = std::fabs(effects.at("experience_years").total);
  for (const auto& [name, e] : effects)
    if (std::fabs(e.total) > x) ++better;
  CHECK(better == 2);
}

TEST_CASE("shipped opposed spec: the two smoking paths cancel") {
  const auto spec = cafe::load_generator_spec("specs/heart_opposed.json");
  const auto effects = cafe::ground_truth_effects(spec);
  CHECK(effects.at("smoking").total == doctest::Approx(0.0).epsilon(1e-9));
}

}  // TEST_SUITE

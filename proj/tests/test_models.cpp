#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "cafe/model.hpp"
#include "helpers.hpp"

using cafe::BuiltinModel;
using cafe::Dataset;
using cafe::Error;
using cafe::ModelKind;
using cafe::TrainOptions;

namespace {

Dataset toy_linear(std::size_t n = 50) {
  // y = 2x, noiseless
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(i) / 7.0;
    y[i] = 2.0 * x[i];
  }
  return Dataset::from_columns({testutil::continuous("x", 0, 10), testutil::continuous("y", 0, 20)},
                               {x, y}, 1);
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("linear kind on noiseless y=2x predicts exactly") {
  const auto model = BuiltinModel::train(ModelKind::Linear, toy_linear(), {"x"});
  cafe::Matrix row(1, 1);
  row.at(0, 0) = 3.0;
  CHECK(model->predict(row)[0] == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("columns outside the training subset are provably ignored") {
  auto spec = testutil::heart_spec(2000, 7);
  const auto ds = cafe::generate(spec);
  for (const auto kind : {ModelKind::Linear, ModelKind::Forest, ModelKind::Mlp}) {
    TrainOptions opts;
    opts.trees = 10;
    opts.iterations = 50;
    const auto model = BuiltinModel::train(kind, ds, {"exercise", "blood_pressure", "bmi"}, opts);
    CHECK(model->used_features() ==
          std::vector<std::string>{"exercise", "blood_pressure", "bmi"});
    cafe::Matrix rows = cafe::model_input(*model, ds);
    const auto before = model->predict(rows);
    for (std::size_t r = 0; r < rows.rows; ++r) rows.at(r, 0) = 1.0 - rows.at(r, 0);  // flip smoking
    const auto after = model->predict(rows);
    CHECK(before == after);
  }
}

TEST_CASE("logistic kind separates a linearly separable toy set exactly") {
  std::vector<double> x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back(-1.0 - i * 0.1);
    y.push_back(0.0);
    x.push_back(1.0 + i * 0.1);
    y.push_back(1.0);
  }
  const auto ds = Dataset::from_columns(
      {testutil::continuous("x", -5, 5), testutil::binary("y")}, {x, y}, 1);
  const auto model = BuiltinModel::train(ModelKind::Logistic, ds, {"x"});
  CHECK(model->is_classifier());
  std::size_t correct = 0;
  for (std::size_t r = 0; r < ds.n(); ++r) {
    const double xi = ds.cell(r, 0);
    const double p = model->predict_one(std::span<const double>{&xi, 1});
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    if (model->predict_label(std::span<const double>{&xi, 1}) == ds.cell(r, 1)) ++correct;
  }
  CHECK(correct == ds.n());
}

TEST_CASE("forest fits a step function better than its mean") {
  std::vector<double> x, y;
  for (int i = 0; i < 400; ++i) {
    const double xi = static_cast<double>(i) / 399.0;
    x.push_back(xi);
    y.push_back(xi > 0.5 ? 3.0 : -1.0);
  }
  const auto ds = Dataset::from_columns(
      {testutil::continuous("x", 0, 1), testutil::continuous("y", -5, 5)}, {x, y}, 1);
  TrainOptions opts;
  opts.trees = 20;
  const auto model = BuiltinModel::train(ModelKind::Forest, ds, {"x"}, opts);
  double lo = 0.0, hi = 0.0;
  const double a = 0.2, b = 0.8;
  lo = model->predict_one(std::span<const double>{&a, 1});
  hi = model->predict_one(std::span<const double>{&b, 1});
  CHECK(lo < 0.0);
  CHECK(hi > 2.0);
}

TEST_CASE("training is deterministic under the seed") {
  auto spec = testutil::heart_spec(800, 5);
  const auto ds = cafe::generate(spec);
  for (const auto kind : {ModelKind::Forest, ModelKind::Mlp}) {
    TrainOptions opts;
    opts.trees = 8;
    opts.iterations = 60;
    opts.seed = 42;
    const auto a = BuiltinModel::train(kind, ds, ds.feature_names(), opts);
    const auto b = BuiltinModel::train(kind, ds, ds.feature_names(), opts);
    const auto rows = cafe::model_input(*a, ds);
    CHECK(a->predict(rows) == b->predict(rows));
  }
}

TEST_CASE("mlp learns an affine map to reasonable accuracy") {
  std::vector<double> x, y;
  for (int i = 0; i < 500; ++i) {
    const double xi = static_cast<double>(i) / 499.0 * 4.0 - 2.0;
    x.push_back(xi);
    y.push_back(2.0 * xi + 1.0);
  }
  const auto ds = Dataset::from_columns(
      {testutil::continuous("x", -2, 2), testutil::continuous("y", -5, 5)}, {x, y}, 1);
  TrainOptions opts;
  opts.iterations = 500;
  const auto model = BuiltinModel::train(ModelKind::Mlp, ds, {"x"}, opts);
  double sse = 0.0;
  for (std::size_t r = 0; r < ds.n(); ++r) {
    const double xi = ds.cell(r, 0);
    const double err = model->predict_one(std::span<const double>{&xi, 1}) - ds.cell(r, 1);
    sse += err * err;
  }
  CHECK(std::sqrt(sse / static_cast<double>(ds.n())) < 0.3);
}

TEST_CASE("training rejects bad inputs") {
  const auto ds = toy_linear(2);
  CHECK_THROWS_WITH_AS(BuiltinModel::train(ModelKind::Linear, ds, {"x"}),
                       doctest::Contains("too-few-rows"), Error);

  // no outcome column
  const auto no_outcome = Dataset::from_columns({testutil::continuous("x", 0, 10)},
                                                {{1, 2, 3, 4, 5}}, -1);
  CHECK_THROWS_WITH_AS(BuiltinModel::train(ModelKind::Linear, no_outcome, {"x"}),
                       doctest::Contains("missing-outcome"), Error);

  CHECK_THROWS_WITH_AS(BuiltinModel::train(ModelKind::Logistic, toy_linear(), {"x"}),
                       doctest::Contains("non-binary-outcome"), Error);
}

TEST_CASE("simulated feature unlearning retrains without the target features") {
  auto spec = testutil::heart_spec(3000, 7);
  const auto ds = cafe::generate(spec);
  cafe::UnlearningTarget target;
  target.features = {"smoking"};
  const auto unlearned = cafe::simulate_unlearning(ModelKind::Linear, ds, target);

  cafe::Matrix rows = cafe::model_input(*unlearned, ds);
  const auto before = unlearned->predict(rows);
  for (std::size_t r = 0; r < rows.rows; ++r) rows.at(r, 0) = 1.0 - rows.at(r, 0);
  CHECK(unlearned->predict(rows) == before);

  cafe::UnlearningTarget everything;
  everything.features = ds.feature_names();
  CHECK_THROWS_WITH_AS(cafe::simulate_unlearning(ModelKind::Linear, ds, everything),
                       doctest::Contains("empty-subset"), Error);
}

TEST_CASE("simulated datapoint unlearning drops rows but keeps full input capability") {
  auto spec = testutil::heart_spec(2000, 9);
  const auto ds = cafe::generate(spec);
  cafe::UnlearningTarget target;
  target.features = {"smoking"};
  target.selector = cafe::parse_predicate("bmi>0");
  const auto unlearned = cafe::simulate_unlearning(ModelKind::Linear, ds, target);
  // predictions must exist for every row, including the dropped subgroup
  const auto preds = cafe::predict_dataset(*unlearned, ds);
  CHECK(preds.size() == ds.n());
  for (double p : preds) CHECK(std::isfinite(p));
}

TEST_CASE("spec-backed oracle model evaluates the outcome mechanism") {
  auto spec = testutil::heart_spec(100, 7, 0.0);
  const auto model = cafe::spec_outcome_model(spec);
  const auto ds = cafe::generate(spec);
  const auto preds = cafe::predict_dataset(*model, ds);
  for (std::size_t r = 0; r < ds.n(); ++r)
    CHECK(preds[r] == doctest::Approx(ds.cell(r, 4)).epsilon(1e-12));
}

TEST_CASE("linear model serialization round-trips bit for bit") {
  auto spec = testutil::heart_spec(1000, 7);
  const auto ds = cafe::generate(spec);
  const auto model = BuiltinModel::train(ModelKind::Linear, ds, ds.feature_names());
  const std::string path = "cafe_test_model_tmp.json";
  cafe::save_model(*model, path);
  const auto back = cafe::load_model(path);
  std::remove(path.c_str());
  const auto rows = cafe::model_input(*model, ds);
  CHECK(model->predict(rows) == back->predict(rows));
}

}  // TEST_SUITE

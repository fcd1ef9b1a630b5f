#include <doctest.h>

#include <cstdio>

#include "cafe/wire.hpp"
#include "helpers.hpp"

#ifndef WIRE_MODEL_BIN
#define WIRE_MODEL_BIN "wire_model"
#endif

using cafe::Error;
using cafe::ExternalModel;

TEST_SUITE("wire") {

TEST_CASE("echo server returns the requested column") {
  ExternalModel model(std::string(WIRE_MODEL_BIN) + " --echo 0", {"a", "b"});
  cafe::Matrix rows(2, 2);
  rows.at(0, 0) = 5.0;
  rows.at(0, 1) = -1.0;
  rows.at(1, 0) = 2.5;
  rows.at(1, 1) = 9.0;
  CHECK(model.predict(rows) == std::vector<double>{5.0, 2.5});
}

TEST_CASE("count mismatch is a protocol violation") {
  ExternalModel model(std::string(WIRE_MODEL_BIN) + " --echo 0 --bad-count", {"a"});
  cafe::Matrix rows(3, 1);
  rows.at(0, 0) = 1;
  rows.at(1, 0) = 2;
  rows.at(2, 0) = 3;
  CHECK_THROWS_WITH_AS(model.predict(rows), doctest::Contains("protocol-violation"), Error);
}

TEST_CASE("non-JSON replies are protocol violations") {
  ExternalModel model(std::string(WIRE_MODEL_BIN) + " --garbage", {"a"});
  cafe::Matrix rows(1, 1);
  rows.at(0, 0) = 1;
  CHECK_THROWS_WITH_AS(model.predict(rows), doctest::Contains("protocol-violation"), Error);
}

TEST_CASE("a dying subprocess is reported") {
  ExternalModel model("head -c 0 > /dev/null", {"a"});
  cafe::Matrix rows(1, 1);
  rows.at(0, 0) = 1;
  CHECK_THROWS_WITH_AS(model.predict(rows), doctest::Contains("subprocess-exit"), Error);
}

TEST_CASE("a silent subprocess times out") {
  ExternalModel model("sleep 30", {"a"}, /*timeout_ms=*/200);
  cafe::Matrix rows(1, 1);
  rows.at(0, 0) = 1;
  CHECK_THROWS_WITH_AS(model.predict(rows), doctest::Contains("timeout"), Error);
}

TEST_CASE("served builtin model matches in-process predictions bit for bit") {
  auto spec = testutil::heart_spec(1000, 7);
  const auto ds = cafe::generate(spec);
  const auto model = cafe::BuiltinModel::train(cafe::ModelKind::Linear, ds, ds.feature_names());
  const std::string path = "cafe_test_wire_model.json";
  cafe::save_model(*model, path);

  ExternalModel served(std::string(WIRE_MODEL_BIN) + " --model " + path, ds.feature_names());
  cafe::Matrix rows(1000, 4);
  for (std::size_t r = 0; r < 1000; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      rows.at(r, c) = (cafe::rng::u01(11, r, c) - 0.5) * 20.0;
  const auto local = model->predict(rows);
  const auto remote = served.predict(rows);
  std::remove(path.c_str());
  REQUIRE(local.size() == remote.size());
  for (std::size_t i = 0; i < local.size(); ++i) CHECK(local[i] == remote[i]);
}

TEST_CASE("batches beyond the per-request cap are split transparently") {
  ExternalModel model(std::string(WIRE_MODEL_BIN) + " --echo 0", {"a"});
  const std::size_t n = ExternalModel::kMaxRowsPerRequest + 100;
  cafe::Matrix rows(n, 1);
  for (std::size_t r = 0; r < n; ++r) rows.at(r, 0) = static_cast<double>(r);
  const auto preds = model.predict(rows);
  REQUIRE(preds.size() == n);
  CHECK(preds.front() == 0.0);
  CHECK(preds.back() == static_cast<double>(n - 1));
}

}  // TEST_SUITE

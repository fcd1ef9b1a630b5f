#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cafe/dataset.hpp"
#include "cafe/error.hpp"
#include "cafe/model.hpp"
#include "cafe/predicate.hpp"
#include "cafe/rng.hpp"

namespace cafe {

enum class PermMetric { Rmse, Accuracy };

/// Permutation importance: the drop in model score after shuffling one
/// feature column within itself, averaged over `repeats` shuffles. Score is
/// negative RMSE for continuous outcomes or accuracy at threshold 0.5 for
/// binary ones, so importances are positive when the feature matters and
/// exactly zero when the model provably ignores the column.
inline double permutation_importance(const Dataset& ds, const PredictionModel& model,
                                     const std::string& feature, PermMetric metric,
                                     std::uint64_t seed = 0, int repeats = 5) {
  require(ds.has_outcome(), "missing-outcome", "permutation importance needs an outcome column");
  require(repeats >= 1, "bad-config", "repeats must be >= 1");
  const std::size_t n = ds.n();

  std::vector<double> truth(n);
  for (std::size_t r = 0; r < n; ++r) truth[r] = ds.outcome(r);

  auto score = [&](const std::vector<double>& preds) {
    if (metric == PermMetric::Accuracy) {
      std::size_t hits = 0;
      for (std::size_t r = 0; r < n; ++r)
        hits += (preds[r] >= 0.5 ? 1.0 : 0.0) == truth[r];
      return static_cast<double>(hits) / static_cast<double>(n);
    }
    double sse = 0.0;
    for (std::size_t r = 0; r < n; ++r) sse += (preds[r] - truth[r]) * (preds[r] - truth[r]);
    return -std::sqrt(sse / static_cast<double>(n));
  };

  Matrix input = model_input(model, ds);
  const double base = score(model.predict(input));

  std::size_t fcol = model.input_schema().size();
  for (std::size_t j = 0; j < model.input_schema().size(); ++j)
    if (model.input_schema()[j] == feature) fcol = j;
  require(fcol < model.input_schema().size(), "unknown-feature",
          "feature '" + feature + "' is not a model input");

  std::vector<double> original(n);
  for (std::size_t r = 0; r < n; ++r) original[r] = input.at(r, fcol);

  double shuffled_score = 0.0;
  std::vector<std::uint32_t> perm(n);
  for (int rep = 0; rep < repeats; ++rep) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
    // Fisher-Yates keyed by (seed, repeat, position)
    for (std::size_t i = n; i-- > 1;) {
      const auto j = rng::below(i + 1, seed, rng::kTagPermutation,
                                static_cast<std::uint64_t>(rep), i);
      std::swap(perm[i], perm[static_cast<std::size_t>(j)]);
    }
    for (std::size_t r = 0; r < n; ++r) input.at(r, fcol) = original[perm[r]];
    shuffled_score += score(model.predict(input));
  }
  for (std::size_t r = 0; r < n; ++r) input.at(r, fcol) = original[r];
  return base - shuffled_score / static_cast<double>(repeats);
}

/// Group fairness numbers for one protected-group split. Conventions follow
/// the common toolkit defaults: differences are unprivileged minus
/// privileged, disparate impact is their rate ratio.
struct FairnessMetrics {
  double spd = 0.0;   // P(yhat=1 | unpriv) - P(yhat=1 | priv)
  double di = 0.0;    // P(yhat=1 | unpriv) / P(yhat=1 | priv)
  double eod = 0.0;   // TPR_unpriv - TPR_priv
  double aod = 0.0;   // mean of FPR and TPR differences
  bool di_infinite = false;
  bool labels_available = false;  // EOD/AOD need binary ground truth
  std::size_t n_privileged = 0;
  std::size_t n_unprivileged = 0;
  double threshold = 0.5;
};

/// Computes SPD/DI always and EOD/AOD when the outcome column holds binary
/// labels. `privileged` selects the privileged group; predictions are
/// binarized at `threshold`.
inline FairnessMetrics fairness_metrics(const Dataset& ds, const PredictionModel& model,
                                        const SubgroupPredicate& privileged,
                                        double threshold = 0.5) {
  FairnessMetrics out;
  out.threshold = threshold;
  SubgroupPredicate pred = privileged;
  pred.bind(ds);
  const std::vector<double> preds = predict_dataset(model, ds);

  bool labels_binary = ds.has_outcome();
  if (ds.has_outcome())
    for (std::size_t r = 0; r < ds.n(); ++r)
      labels_binary = labels_binary && (ds.outcome(r) == 0.0 || ds.outcome(r) == 1.0);
  out.labels_available = labels_binary;

  struct Group {
    std::size_t n = 0, pos = 0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  } priv, unpriv;

  for (std::size_t r = 0; r < ds.n(); ++r) {
    Group& grp = pred.eval(ds, r) ? priv : unpriv;
    ++grp.n;
    const bool yhat = preds[r] >= threshold;
    if (yhat) ++grp.pos;
    if (labels_binary) {
      const bool y = ds.outcome(r) == 1.0;
      if (y && yhat) ++grp.tp;
      if (y && !yhat) ++grp.fn;
      if (!y && yhat) ++grp.fp;
      if (!y && !yhat) ++grp.tn;
    }
  }
  require(priv.n > 0, "empty-group", "privileged group is empty");
  require(unpriv.n > 0, "empty-group", "unprivileged group is empty");
  out.n_privileged = priv.n;
  out.n_unprivileged = unpriv.n;

  const double rate_p = static_cast<double>(priv.pos) / static_cast<double>(priv.n);
  const double rate_u = static_cast<double>(unpriv.pos) / static_cast<double>(unpriv.n);
  out.spd = rate_u - rate_p;
  if (rate_p == 0.0) {
    out.di_infinite = rate_u > 0.0;
    out.di = out.di_infinite ? std::numeric_limits<double>::infinity() : 1.0;
  } else {
    out.di = rate_u / rate_p;
  }
  if (labels_binary) {
    auto tpr = [](const Group& g) {
      return g.tp + g.fn == 0 ? 0.0 : static_cast<double>(g.tp) / static_cast<double>(g.tp + g.fn);
    };
    auto fpr = [](const Group& g) {
      return g.fp + g.tn == 0 ? 0.0 : static_cast<double>(g.fp) / static_cast<double>(g.fp + g.tn);
    };
    out.eod = tpr(unpriv) - tpr(priv);
    out.aod = 0.5 * ((fpr(unpriv) - fpr(priv)) + (tpr(unpriv) - tpr(priv)));
  }
  return out;
}

/// Group split used when a feature is treated as "protected": equality on
/// the largest observed value when the column is binary-like (two distinct
/// values), strictly-above-median otherwise. Every report records the split
/// it used.
inline SubgroupPredicate protected_group_predicate(const Dataset& ds, const std::string& feature) {
  auto values = ds.column_values(static_cast<std::size_t>(ds.column(feature)));
  std::sort(values.begin(), values.end());
  const auto distinct = std::unique(values.begin(), values.end()) - values.begin();
  SubgroupPredicate p;
  if (distinct <= 2) {
    p.atoms.push_back({feature, CmpOp::Eq, values[static_cast<std::size_t>(distinct - 1)], -1});
  } else {
    auto sorted = ds.column_values(static_cast<std::size_t>(ds.column(feature)));
    std::sort(sorted.begin(), sorted.end());
    p.atoms.push_back({feature, CmpOp::Gt, sorted[sorted.size() / 2], -1});
  }
  return p;
}

}  // namespace cafe

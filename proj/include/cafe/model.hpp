#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafe/dataset.hpp"
#include "cafe/error.hpp"
#include "cafe/linalg.hpp"
#include "cafe/predicate.hpp"
#include "cafe/rng.hpp"
#include "cafe/synth.hpp"

namespace cafe {

/// Black-box prediction boundary: batches of feature rows in, one real-valued
/// output per row. Implementations must be pure (same batch, same outputs)
/// and safe for concurrent callers over disjoint batches.
class PredictionModel {
 public:
  virtual ~PredictionModel() = default;

  /// Feature names, in the column order `predict` expects.
  virtual const std::vector<std::string>& input_schema() const = 0;

  /// One prediction per row; rows.cols must equal input_schema().size().
  virtual std::vector<double> predict(const Matrix& rows) const = 0;

  double predict_one(std::span<const double> row) const {
    Matrix m(1, row.size());
    std::copy(row.begin(), row.end(), m.a.begin());
    return predict(m)[0];
  }
};

/// Builds the prediction matrix for a dataset view, mapping dataset columns
/// onto the model's schema by name.
inline Matrix model_input(const PredictionModel& model, const Dataset& ds) {
  const auto& schema = model.input_schema();
  std::vector<int> cols;
  for (const auto& name : schema) cols.push_back(ds.column(name));
  Matrix m(ds.n(), schema.size());
  for (std::size_t r = 0; r < ds.n(); ++r)
    for (std::size_t j = 0; j < cols.size(); ++j)
      m.at(r, j) = ds.cell(r, static_cast<std::size_t>(cols[j]));
  return m;
}

inline std::vector<double> predict_dataset(const PredictionModel& model, const Dataset& ds) {
  return model.predict(model_input(model, ds));
}

/// Adapter turning any row function into a PredictionModel. Used for
/// generator-backed oracle models and test doubles.
class FunctionModel : public PredictionModel {
 public:
  FunctionModel(std::vector<std::string> schema, std::function<double(std::span<const double>)> fn)
      : schema_(std::move(schema)), fn_(std::move(fn)) {}

  const std::vector<std::string>& input_schema() const override { return schema_; }

  std::vector<double> predict(const Matrix& rows) const override {
    require(rows.cols == schema_.size(), "schema-mismatch", "prediction batch has wrong width");
    std::vector<double> out(rows.rows);
    for (std::size_t i = 0; i < rows.rows; ++i) out[i] = fn_(rows.row(i));
    return out;
  }

 private:
  std::vector<std::string> schema_;
  std::function<double(std::span<const double>)> fn_;
};

/// The generator's outcome mechanism as a noiseless model: the ideal
/// predictor for its own synthetic data, handy as a test oracle.
inline std::shared_ptr<PredictionModel> spec_outcome_model(const GeneratorSpec& spec) {
  const auto& g = spec.graph;
  std::vector<int> feature_nodes;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (static_cast<int>(i) != g.outcome()) feature_nodes.push_back(static_cast<int>(i));
  GeneratorSpec copy = spec;
  const int outcome = g.outcome();
  return std::make_shared<FunctionModel>(
      g.feature_names(), [copy, feature_nodes, outcome](std::span<const double> row) {
        std::vector<double> values(copy.graph.size(), 0.0);
        for (std::size_t j = 0; j < feature_nodes.size(); ++j)
          values[static_cast<std::size_t>(feature_nodes[j])] = row[j];
        return copy.mechanism(outcome, values);
      });
}

enum class ModelKind { Linear, Logistic, Forest, Mlp };

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "linear") return ModelKind::Linear;
  if (s == "logistic") return ModelKind::Logistic;
  if (s == "forest") return ModelKind::Forest;
  if (s == "mlp") return ModelKind::Mlp;
  fail("bad-config", "unknown model kind '" + s + "' (linear|logistic|forest|mlp)");
}

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Linear: return "linear";
    case ModelKind::Logistic: return "logistic";
    case ModelKind::Forest: return "forest";
    case ModelKind::Mlp: return "mlp";
  }
  return "?";
}

struct TrainOptions {
  int trees = 50;
  int max_depth = 6;
  int min_leaf = 5;
  int hidden = 16;
  int iterations = 300;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
};

/// Self-contained trainable models: linear / logistic regression, bagged
/// regression trees, and a small tanh network. All training is deterministic
/// under the seed; predictions read only the declared feature subset.
class BuiltinModel : public PredictionModel {
 public:
  const std::vector<std::string>& input_schema() const override { return schema_; }
  ModelKind kind() const { return kind_; }
  bool is_classifier() const { return kind_ == ModelKind::Logistic; }

  /// Names of the columns the model actually reads; all others are provably
  /// ignored by construction.
  std::vector<std::string> used_features() const {
    std::vector<std::string> out;
    for (int u : used_) out.push_back(schema_[static_cast<std::size_t>(u)]);
    return out;
  }

  std::vector<double> predict(const Matrix& rows) const override {
    require(rows.cols == schema_.size(), "schema-mismatch",
            "prediction batch has width " + std::to_string(rows.cols) + ", model expects " +
                std::to_string(schema_.size()));
    std::vector<double> out(rows.rows);
    for (std::size_t i = 0; i < rows.rows; ++i) out[i] = predict_row(rows.row(i));
    return out;
  }

  /// Hard label at the given probability threshold (classifiers only).
  double predict_label(std::span<const double> row, double threshold = 0.5) const {
    return predict_row(row) >= threshold ? 1.0 : 0.0;
  }

  static std::shared_ptr<BuiltinModel> train(ModelKind kind, const Dataset& ds,
                                             const std::vector<std::string>& subset,
                                             const TrainOptions& opts = {}) {
    require(ds.has_outcome(), "missing-outcome", "training needs an outcome column");
    require(!subset.empty(), "empty-subset", "training needs at least one input feature");
    auto model = std::make_shared<BuiltinModel>();
    model->kind_ = kind;
    model->schema_ = ds.feature_names();
    for (const auto& name : subset) {
      const auto it = std::find(model->schema_.begin(), model->schema_.end(), name);
      require(it != model->schema_.end(), "unknown-feature",
              "training subset names unknown feature '" + name + "'");
      model->used_.push_back(static_cast<int>(it - model->schema_.begin()));
    }
    const std::size_t n = ds.n();
    require(n >= model->used_.size() + 2, "too-few-rows",
            "training needs at least " + std::to_string(model->used_.size() + 2) + " rows");

    Matrix X(n, model->used_.size());
    {
      std::vector<int> cols;
      for (int u : model->used_) cols.push_back(ds.column(model->schema_[static_cast<std::size_t>(u)]));
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < cols.size(); ++j)
          X.at(r, j) = ds.cell(r, static_cast<std::size_t>(cols[j]));
    }
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) y[r] = ds.outcome(r);

    switch (kind) {
      case ModelKind::Linear: model->fit_linear(X, y); break;
      case ModelKind::Logistic: model->fit_logistic(X, y); break;
      case ModelKind::Forest: model->fit_forest(X, y, opts); break;
      case ModelKind::Mlp: model->fit_mlp(X, y, opts); break;
    }
    return model;
  }

  /// Direct construction of a linear model with known coefficients.
  static std::shared_ptr<BuiltinModel> linear(std::vector<std::string> schema,
                                              const std::map<std::string, double>& coefs,
                                              double intercept) {
    auto model = std::make_shared<BuiltinModel>();
    model->kind_ = ModelKind::Linear;
    model->schema_ = std::move(schema);
    model->intercept_ = intercept;
    for (const auto& [name, c] : coefs) {
      const auto it = std::find(model->schema_.begin(), model->schema_.end(), name);
      require(it != model->schema_.end(), "unknown-feature", "coefficient for unknown feature '" + name + "'");
      model->used_.push_back(static_cast<int>(it - model->schema_.begin()));
      model->coef_.push_back(c);
    }
    return model;
  }

  nlohmann::json to_json() const {
    require(kind_ == ModelKind::Linear || kind_ == ModelKind::Logistic, "unsupported",
            "only linear and logistic models serialize");
    return nlohmann::json{{"kind", to_string(kind_)},
                          {"schema", schema_},
                          {"used", used_},
                          {"coef", coef_},
                          {"intercept", intercept_}};
  }

  static std::shared_ptr<BuiltinModel> from_json(const nlohmann::json& j) {
    auto model = std::make_shared<BuiltinModel>();
    model->kind_ = model_kind_from_string(j.at("kind").get<std::string>());
    model->schema_ = j.at("schema").get<std::vector<std::string>>();
    model->used_ = j.at("used").get<std::vector<int>>();
    model->coef_ = j.at("coef").get<std::vector<double>>();
    model->intercept_ = j.at("intercept").get<double>();
    return model;
  }

 private:
  double predict_row(std::span<const double> row) const {
    switch (kind_) {
      case ModelKind::Linear: {
        double y = intercept_;
        for (std::size_t j = 0; j < used_.size(); ++j)
          y += coef_[j] * row[static_cast<std::size_t>(used_[j])];
        return y;
      }
      case ModelKind::Logistic: {
        double eta = intercept_;
        for (std::size_t j = 0; j < used_.size(); ++j)
          eta += coef_[j] * row[static_cast<std::size_t>(used_[j])];
        return 1.0 / (1.0 + std::exp(-eta));
      }
      case ModelKind::Forest: {
        double s = 0.0;
        for (const auto& tree : trees_) {
          int node = 0;
          while (tree[static_cast<std::size_t>(node)].feature >= 0) {
            const auto& t = tree[static_cast<std::size_t>(node)];
            node = row[static_cast<std::size_t>(used_[static_cast<std::size_t>(t.feature)])] <= t.threshold
                       ? t.left
                       : t.right;
          }
          s += tree[static_cast<std::size_t>(node)].value;
        }
        return s / static_cast<double>(trees_.size());
      }
      case ModelKind::Mlp: {
        double out = b2_;
        for (int h = 0; h < hidden_; ++h) {
          double z = b1_[static_cast<std::size_t>(h)];
          for (std::size_t j = 0; j < used_.size(); ++j) {
            const double x = (row[static_cast<std::size_t>(used_[j])] - x_mean_[j]) / x_sd_[j];
            z += w1_[static_cast<std::size_t>(h) * used_.size() + j] * x;
          }
          out += w2_[static_cast<std::size_t>(h)] * std::tanh(z);
        }
        return out * y_sd_ + y_mean_;
      }
    }
    return 0.0;
  }

  void fit_linear(const Matrix& X, const std::vector<double>& y) {
    Matrix D(X.rows, X.cols + 1);
    for (std::size_t r = 0; r < X.rows; ++r) {
      D.at(r, 0) = 1.0;
      for (std::size_t j = 0; j < X.cols; ++j) D.at(r, j + 1) = X.at(r, j);
    }
    const auto fit = linalg::ols(D, y);
    intercept_ = fit.coef[0];
    coef_.assign(fit.coef.begin() + 1, fit.coef.end());
  }

  void fit_logistic(const Matrix& X, const std::vector<double>& y) {
    for (double v : y)
      require(v == 0.0 || v == 1.0, "non-binary-outcome",
              "logistic training needs 0/1 outcome labels");
    Matrix D(X.rows, X.cols + 1);
    for (std::size_t r = 0; r < X.rows; ++r) {
      D.at(r, 0) = 1.0;
      for (std::size_t j = 0; j < X.cols; ++j) D.at(r, j + 1) = X.at(r, j);
    }
    const auto fit = linalg::logistic_irls(D, y);
    intercept_ = fit.coef[0];
    coef_.assign(fit.coef.begin() + 1, fit.coef.end());
  }

  struct TreeNode {
    int feature = -1;  // -1: leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };

  void fit_forest(const Matrix& X, const std::vector<double>& y, const TrainOptions& opts) {
    const std::size_t n = X.rows;
    trees_.resize(static_cast<std::size_t>(opts.trees));
    for (int t = 0; t < opts.trees; ++t) {
      std::vector<std::uint32_t> bag(n);
      for (std::size_t i = 0; i < n; ++i)
        bag[i] = static_cast<std::uint32_t>(
            rng::below(n, opts.seed, rng::kTagBagging, static_cast<std::uint64_t>(t), i));
      auto& tree = trees_[static_cast<std::size_t>(t)];
      tree.clear();
      grow_tree(X, y, bag, 0, opts, tree);
    }
  }

  int grow_tree(const Matrix& X, const std::vector<double>& y, std::vector<std::uint32_t>& idx,
                int depth, const TrainOptions& opts, std::vector<TreeNode>& tree) {
    const int me = static_cast<int>(tree.size());
    tree.push_back({});
    double sum = 0.0, sum2 = 0.0;
    for (auto i : idx) {
      sum += y[i];
      sum2 += y[i] * y[i];
    }
    const double node_n = static_cast<double>(idx.size());
    tree[static_cast<std::size_t>(me)].value = sum / node_n;
    const double node_sse = sum2 - sum * sum / node_n;
    if (depth >= opts.max_depth || idx.size() < 2 * static_cast<std::size_t>(opts.min_leaf) ||
        node_sse <= 1e-12)
      return me;

    int best_feature = -1;
    double best_threshold = 0.0, best_sse = node_sse - 1e-12;
    std::vector<std::uint32_t> sorted = idx;
    for (std::size_t j = 0; j < X.cols; ++j) {
      std::sort(sorted.begin(), sorted.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double xa = X.at(a, j), xb = X.at(b, j);
        return xa < xb || (xa == xb && a < b);
      });
      double ls = 0.0, ls2 = 0.0;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        const double yi = y[sorted[k]];
        ls += yi;
        ls2 += yi * yi;
        const double xl = X.at(sorted[k], j), xr = X.at(sorted[k + 1], j);
        if (xl == xr) continue;
        const std::size_t nl = k + 1, nr = sorted.size() - nl;
        if (nl < static_cast<std::size_t>(opts.min_leaf) || nr < static_cast<std::size_t>(opts.min_leaf))
          continue;
        const double rs = sum - ls, rs2 = sum2 - ls2;
        const double sse = (ls2 - ls * ls / static_cast<double>(nl)) +
                           (rs2 - rs * rs / static_cast<double>(nr));
        if (sse < best_sse) {
          best_sse = sse;
          best_feature = static_cast<int>(j);
          best_threshold = xl + (xr - xl) / 2.0;
        }
      }
    }
    if (best_feature < 0) return me;

    std::vector<std::uint32_t> left, right;
    for (auto i : idx)
      (X.at(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left : right).push_back(i);
    tree[static_cast<std::size_t>(me)].feature = best_feature;
    tree[static_cast<std::size_t>(me)].threshold = best_threshold;
    tree[static_cast<std::size_t>(me)].left = grow_tree(X, y, left, depth + 1, opts, tree);
    tree[static_cast<std::size_t>(me)].right = grow_tree(X, y, right, depth + 1, opts, tree);
    return me;
  }

  void fit_mlp(const Matrix& X, const std::vector<double>& y, const TrainOptions& opts) {
    const std::size_t n = X.rows, m = X.cols;
    hidden_ = opts.hidden;
    x_mean_.assign(m, 0.0);
    x_sd_.assign(m, 1.0);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += X.at(r, j);
      x_mean_[j] = s / static_cast<double>(n);
      double v = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double d = X.at(r, j) - x_mean_[j];
        v += d * d;
      }
      x_sd_[j] = std::max(std::sqrt(v / static_cast<double>(n)), 1e-9);
    }
    y_mean_ = linalg::mean(y);
    y_sd_ = std::max(linalg::stddev(y), 1e-9);

    const std::size_t H = static_cast<std::size_t>(hidden_);
    w1_.assign(H * m, 0.0);
    b1_.assign(H, 0.0);
    w2_.assign(H, 0.0);
    b2_ = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t j = 0; j < m; ++j)
        w1_[h * m + j] = 0.5 * rng::gauss(opts.seed, rng::kTagInit, h, j);
      w2_[h] = 0.5 * rng::gauss(opts.seed, rng::kTagInit, h, m + 1);
    }

    std::vector<double> xs(n * m), hid(H), ys(n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < m; ++j) xs[r * m + j] = (X.at(r, j) - x_mean_[j]) / x_sd_[j];
      ys[r] = (y[r] - y_mean_) / y_sd_;
    }
    std::vector<double> g_w1(H * m), g_b1(H), g_w2(H);
    for (int it = 0; it < opts.iterations; ++it) {
      std::fill(g_w1.begin(), g_w1.end(), 0.0);
      std::fill(g_b1.begin(), g_b1.end(), 0.0);
      std::fill(g_w2.begin(), g_w2.end(), 0.0);
      double g_b2 = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        double out = b2_;
        for (std::size_t h = 0; h < H; ++h) {
          double z = b1_[h];
          for (std::size_t j = 0; j < m; ++j) z += w1_[h * m + j] * xs[r * m + j];
          hid[h] = std::tanh(z);
          out += w2_[h] * hid[h];
        }
        const double err = out - ys[r];
        g_b2 += err;
        for (std::size_t h = 0; h < H; ++h) {
          g_w2[h] += err * hid[h];
          const double dh = err * w2_[h] * (1.0 - hid[h] * hid[h]);
          g_b1[h] += dh;
          for (std::size_t j = 0; j < m; ++j) g_w1[h * m + j] += dh * xs[r * m + j];
        }
      }
      const double scale = opts.learning_rate / static_cast<double>(n);
      b2_ -= scale * g_b2;
      for (std::size_t h = 0; h < H; ++h) {
        w2_[h] -= scale * g_w2[h];
        b1_[h] -= scale * g_b1[h];
        for (std::size_t j = 0; j < m; ++j) w1_[h * m + j] -= scale * g_w1[h * m + j];
      }
    }
  }

  ModelKind kind_ = ModelKind::Linear;
  std::vector<std::string> schema_;
  std::vector<int> used_;
  // linear / logistic
  std::vector<double> coef_;
  double intercept_ = 0.0;
  // forest
  std::vector<std::vector<TreeNode>> trees_;
  // mlp
  int hidden_ = 0;
  std::vector<double> w1_, b1_, w2_, x_mean_, x_sd_;
  double b2_ = 0.0, y_mean_ = 0.0, y_sd_ = 1.0;
};

inline void save_model(const BuiltinModel& model, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-error", "cannot write model file '" + path + "'");
  out << model.to_json().dump(2) << "\n";
}

inline std::shared_ptr<BuiltinModel> load_model(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "file-not-found", "cannot open model file '" + path + "'");
  nlohmann::json j;
  in >> j;
  return BuiltinModel::from_json(j);
}

/// Simulated unlearning by retraining, the gold standard this toolkit
/// verifies against. An all-rows selector drops the target features from the
/// training inputs (feature unlearning); a proper selector removes the
/// matching rows from the training set (datapoint unlearning). The returned
/// model still accepts full-width rows either way.
inline std::shared_ptr<PredictionModel> simulate_unlearning(ModelKind kind, const Dataset& ds,
                                                            const UnlearningTarget& target,
                                                            const TrainOptions& opts = {}) {
  require(!target.features.empty(), "empty-target", "unlearning target needs features");
  Dataset train_ds = ds;
  std::vector<std::string> subset = ds.feature_names();
  if (target.selector.is_all_rows()) {
    for (const auto& f : target.features) {
      const auto it = std::find(subset.begin(), subset.end(), f);
      require(it != subset.end(), "unknown-feature", "target feature '" + f + "' not in schema");
      subset.erase(it);
    }
    require(!subset.empty(), "empty-subset", "unlearning target drops every input feature");
  } else {
    SubgroupPredicate keep = target.selector;
    keep.bind(ds);
    std::vector<std::uint32_t> rows;
    for (std::size_t r = 0; r < ds.n(); ++r)
      if (!keep.eval(ds, r)) rows.push_back(ds.row_index()[r]);
    require(!rows.empty(), "too-few-rows", "unlearning target removes every training row");
    train_ds = ds.view(std::move(rows));
  }
  return BuiltinModel::train(kind, train_ds, subset, opts);
}

}  // namespace cafe

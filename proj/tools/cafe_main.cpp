// Operator entry point: verification pipeline plus the dataset generator,
// comparison tables, timing benchmark and graph-perturbation harness.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cafe/baselines.hpp"
#include "cafe/estimator.hpp"
#include "cafe/fuzz.hpp"
#include "cafe/model.hpp"
#include "cafe/report.hpp"
#include "cafe/robustness.hpp"
#include "cafe/sem.hpp"
#include "cafe/synth.hpp"
#include "cafe/wire.hpp"

namespace {

using nlohmann::json;

// error code -> (owning module, remedy hint)
const std::map<std::string, std::pair<std::string, std::string>>& error_directory() {
  static const std::map<std::string, std::pair<std::string, std::string>> dir{
      {"cycle-detected", {"graph", "remove the cycle named in the message"}},
      {"unknown-node", {"graph", "check node names in the graph file"}},
      {"bad-override", {"graph", "fix the backdoor_overrides entry"}},
      {"path-explosion", {"graph", "raise the path cap or simplify the graph"}},
      {"schema-mismatch", {"data", "align the file header with the graph's nodes"}},
      {"type-error", {"data", "fix the offending cell named in the message"}},
      {"domain-violation", {"data", "extend the declared domain or fix the value"}},
      {"empty-dataset", {"data", "the data section needs at least one row"}},
      {"syntax-error", {"data", "fix the predicate at the reported byte offset"}},
      {"unknown-feature", {"data", "the predicate names a column that does not exist"}},
      {"empty-target", {"data", "the target must select at least one (row, feature) pair"}},
      {"too-few-rows", {"sem", "supply more rows than parents per node"}},
      {"empty-support", {"sem", "the feature has no observed values to draw from"}},
      {"bad-spec", {"synth", "fix the generator spec document"}},
      {"nonlinear-spec", {"synth", "gated specs need a gate assignment"}},
      {"missing-outcome", {"models", "training data needs the outcome column"}},
      {"non-binary-outcome", {"models", "logistic models need 0/1 labels"}},
      {"protocol-violation", {"models", "the external model broke the wire protocol"}},
      {"subprocess-exit", {"models", "the external model process died"}},
      {"timeout", {"models", "the external model did not answer in time"}},
      {"sem-mismatch", {"fuzz", "fit the structural models on this graph"}},
      {"invalid-path", {"fuzz", "paths must follow graph edges from a target feature to the outcome"}},
      {"estimator-degenerate", {"cafe", "switch to the regression estimator"}},
      {"bad-config", {"cli", "see --help for valid values"}},
      {"file-not-found", {"cli", "check the path"}},
      {"already-complete", {"robustness", "the graph has no forward edge left to add"}},
  };
  return dir;
}

int fail_with(const cafe::Error& e) {
  const auto it = error_directory().find(e.code());
  if (it == error_directory().end()) {
    std::cerr << "error: " << e.what() << "\n";
  } else {
    std::cerr << "error [" << it->second.first << "]: " << e.what() << "\n  hint: "
              << it->second.second << "\n";
  }
  return 1;
}

struct VerifyOptions {
  std::string graph_path, data_path, out_path = "report.json";
  std::string model_kind, external_cmd;
  std::vector<std::string> target_features;
  std::string where;
  std::string method = "cafe";       // fuzz|cafe|perm|fairness|all
  std::string mode = "total";       // total|direct|paths
  std::string estimator = "regression";
  std::vector<std::string> train_drop;
  std::string drop_rows;
  double tau = -1.0;                 // <0: default (1% of outcome sd)
  int samples = 10;
  int grid_points = 11;
  std::string strategy = "empirical";
  std::uint64_t seed = 0;
  bool bootstrap = false;
  double threshold = 0.5;
};

int run_verify(const VerifyOptions& opt) {
  cafe::util::Stopwatch total_watch;
  const auto graph = cafe::load_graph(opt.graph_path);
  const auto ds = cafe::load_dataset(opt.data_path, graph);

  cafe::UnlearningTarget target;
  target.features = opt.target_features;
  target.selector = cafe::parse_predicate(opt.where);
  target.selector.bind(ds);
  target.validate(graph, ds);

  const bool want_fuzz = opt.method == "fuzz" || opt.method == "all";
  const bool want_cafe = opt.method == "cafe" || opt.method == "all";
  const bool want_perm = opt.method == "perm" || opt.method == "all";
  const bool want_fair = opt.method == "fairness" || opt.method == "all";
  cafe::require(want_fuzz || want_cafe || want_perm || want_fair, "bad-config",
                "--method must be one of fuzz|cafe|perm|fairness|all");

  // model source: exactly one of builtin kind / external command
  cafe::require(opt.model_kind.empty() != opt.external_cmd.empty(), "bad-config",
                "choose exactly one of --model or --external-cmd");
  std::shared_ptr<cafe::PredictionModel> model;
  json model_desc;
  if (!opt.external_cmd.empty()) {
    model = std::make_shared<cafe::ExternalModel>(opt.external_cmd, ds.feature_names());
    model_desc = {{"source", "external"}, {"command", opt.external_cmd}};
  } else {
    const auto kind = cafe::model_kind_from_string(opt.model_kind);
    cafe::Dataset train_ds = ds;
    if (!opt.drop_rows.empty()) {
      auto drop = cafe::parse_predicate(opt.drop_rows);
      drop.bind(ds);
      std::vector<std::uint32_t> keep;
      for (std::size_t r = 0; r < ds.n(); ++r)
        if (!drop.eval(ds, r)) keep.push_back(ds.row_index()[r]);
      cafe::require(!keep.empty(), "too-few-rows", "--drop-rows removes every training row");
      train_ds = ds.view(std::move(keep));
    }
    auto subset = ds.feature_names();
    for (const auto& f : opt.train_drop) {
      const auto it = std::find(subset.begin(), subset.end(), f);
      cafe::require(it != subset.end(), "unknown-feature",
                    "--train-drop names unknown feature '" + f + "'");
      subset.erase(it);
    }
    cafe::require(!subset.empty(), "bad-config", "--train-drop removes every input feature");
    cafe::TrainOptions topts;
    topts.seed = opt.seed;
    model = cafe::BuiltinModel::train(kind, train_ds, subset, topts);
    model_desc = {{"source", "builtin"},
                  {"kind", opt.model_kind},
                  {"inputs", subset},
                  {"dropped_rows", opt.drop_rows},
                  {"seed", opt.seed}};
  }

  cafe::InfluenceReport report;
  json& p = report.payload;
  p["target"] = {{"features", target.features}, {"where", opt.where}};
  p["model"] = model_desc;
  p["dataset"] = {{"path", opt.data_path}, {"rows", ds.n()}};
  p["methods"] = json::object();
  json rankings = json::object();
  json timings = json::object();

  cafe::CafeConfig cafe_cfg;
  cafe_cfg.seed = opt.seed;
  cafe_cfg.bootstrap = opt.bootstrap;
  if (opt.tau >= 0.0) cafe_cfg.tau = opt.tau;
  cafe_cfg.estimator = opt.estimator == "stratified" ? cafe::CafeEstimator::Stratified
                                                     : cafe::CafeEstimator::Regression;

  int exit_code = 0;
  if (want_cafe) {
    cafe::util::Stopwatch sw;
    const auto result = cafe::cafe_estimate(graph, ds, *model, target, cafe_cfg);
    timings["cafe_s"] = sw.seconds();
    p["methods"]["cafe"] = cafe::cafe_result_json(result);
    rankings["cafe"] = cafe::rank_features(result.score);
    exit_code = result.unlearned ? 0 : 2;

    if (!target.selector.is_all_rows()) {
      // subgroup breakdown: scoped rows vs. the complement population
      json sub;
      sub["where"] = opt.where;
      cafe::UnlearningTarget global = target;
      global.selector = cafe::SubgroupPredicate{};
      const auto global_r = cafe::cafe_estimate(graph, ds, *model, global, cafe_cfg);
      sub["global"] = cafe::cafe_result_json(global_r);
      // complement view: rows failing the predicate
      std::vector<std::uint32_t> complement;
      for (std::size_t r = 0; r < ds.n(); ++r)
        if (!target.selector.eval(ds, r)) complement.push_back(ds.row_index()[r]);
      if (!complement.empty()) {
        const auto comp_ds = ds.view(std::move(complement));
        const auto comp_r = cafe::cafe_estimate(graph, comp_ds, *model, global, cafe_cfg);
        sub["complement"] = cafe::cafe_result_json(comp_r);
      }
      p["subgroups"] = std::move(sub);
    }
  }

  if (want_fuzz) {
    cafe::util::Stopwatch sw;
    const auto sem = cafe::fit_sem(graph, ds);
    cafe::FuzzConfig fuzz_cfg;
    fuzz_cfg.samples = opt.samples;
    fuzz_cfg.seed = opt.seed;
    fuzz_cfg.grid_points = opt.grid_points;
    if (opt.strategy == "grid")
      fuzz_cfg.strategy = cafe::InterventionStrategy::DomainGrid;
    else if (opt.strategy == "pair")
      fuzz_cfg.strategy = cafe::InterventionStrategy::FixedPair;
    else
      cafe::require(opt.strategy == "empirical", "bad-config",
                    "--strategy must be empirical|grid|pair");

    cafe::InfluenceScore score;
    if (opt.mode == "direct") {
      score = cafe::fuzz_direct(graph, sem, *model, ds, target, fuzz_cfg);
    } else {
      score = cafe::fuzz_effects(graph, sem, *model, ds, target, fuzz_cfg);
      if (opt.mode == "paths") {
        cafe::PathSet paths;
        for (const auto& f : target.features) {
          const auto ps = graph.directed_paths(f, fuzz_cfg.path_cap);
          paths.paths.insert(paths.paths.end(), ps.paths.begin(), ps.paths.end());
        }
        if (!paths.paths.empty()) {
          const auto path_score =
              cafe::fuzz_paths(graph, sem, *model, ds, target, paths, fuzz_cfg);
          score.path_scores = path_score.path_scores;
        }
      } else {
        cafe::require(opt.mode == "total", "bad-config", "--mode must be total|direct|paths");
      }
    }
    timings["fuzz_s"] = sw.seconds();
    p["methods"]["fuzz"] = {{"scores", cafe::influence_score_json(score)}};
    rankings["fuzz"] = cafe::rank_features(score);
  }

  if (want_perm) {
    cafe::util::Stopwatch sw;
    cafe::require(ds.has_outcome(), "missing-outcome",
                  "permutation importance needs the outcome column in the data file");
    const auto& outcome_decl = graph.node(graph.outcome());
    const auto metric = outcome_decl.kind == cafe::VarKind::Categorical
                            ? cafe::PermMetric::Accuracy
                            : cafe::PermMetric::Rmse;
    json scores;
    cafe::InfluenceScore perm_score;
    perm_score.features = target.features;
    for (const auto& f : target.features) {
      const double v = cafe::permutation_importance(ds, *model, f, metric, opt.seed, 5);
      scores[f] = v;
      perm_score.effects[f].total = v;
    }
    timings["perm_s"] = sw.seconds();
    p["methods"]["perm"] = {{"scores", scores},
                            {"metric", metric == cafe::PermMetric::Accuracy ? "accuracy" : "rmse"}};
    rankings["perm"] = cafe::rank_features(perm_score);
  }

  if (want_fair) {
    cafe::util::Stopwatch sw;
    json fair;
    for (const auto& f : target.features) {
      const auto split = cafe::protected_group_predicate(ds, f);
      const auto m = cafe::fairness_metrics(ds, *model, split, opt.threshold);
      json jm{{"privileged_when", split.print()},
              {"threshold", m.threshold},
              {"spd", m.spd},
              {"di", m.di_infinite ? json("inf") : json(m.di)},
              {"n_privileged", m.n_privileged},
              {"n_unprivileged", m.n_unprivileged}};
      if (m.labels_available) {
        jm["eod"] = m.eod;
        jm["aod"] = m.aod;
      }
      fair[f] = std::move(jm);
    }
    timings["fairness_s"] = sw.seconds();
    p["methods"]["fairness"] = std::move(fair);
  }

  p["rankings"] = std::move(rankings);
  p["provenance"] = {{"graph_hash", graph.hash()},
                     {"seed", opt.seed},
                     {"version", cafe::kToolVersion}};
  {
    json cfg{{"graph", opt.graph_path}, {"data", opt.data_path},
             {"features", opt.target_features}, {"where", opt.where},
             {"method", opt.method}, {"mode", opt.mode}, {"estimator", opt.estimator},
             {"tau", opt.tau}, {"samples", opt.samples}, {"seed", opt.seed},
             {"model", model_desc}};
    p["provenance"]["config_hash"] = cafe::util::hex64(cafe::util::fnv1a(cfg.dump()));
  }
  timings["total_s"] = total_watch.seconds();
  report.run = {{"timestamp", cafe::timestamp_utc()}, {"timings", timings}};
  report.write(opt.out_path);

  // stdout summary
  if (p["methods"].contains("cafe")) {
    const auto& c = p["methods"]["cafe"];
    std::cout << "verdict: " << c["verdict"].get<std::string>()
              << "  (|combined total| " << std::fabs(c["combined_total"].get<double>())
              << " vs tau " << c["tau"].get<double>() << ")\n";
    for (const auto& f : target.features) {
      const auto& e = c["scores"][f];
      std::cout << "  " << f << ": total " << e["total"].get<double>() << ", direct "
                << e["direct"].get<double>() << ", indirect " << e["indirect"].get<double>()
                << "\n";
    }
  }
  std::cout << "report written to " << opt.out_path << "\n";
  return exit_code;
}

int run_generate(const std::string& spec_path, const std::string& out_dir) {
  const auto spec = cafe::load_generator_spec(spec_path);
  const auto ds = cafe::generate(spec);
  std::filesystem::create_directories(out_dir);
  const auto stem = std::filesystem::path(spec_path).stem().string();
  const auto data_path = out_dir + "/" + stem + "_data.csv";
  const auto graph_path = out_dir + "/" + stem + "_graph.json";
  cafe::save_dataset(ds, data_path);
  cafe::save_graph(spec.graph, graph_path);
  std::cout << "wrote " << data_path << " (" << ds.n() << " rows x " << ds.column_count()
            << " columns) and " << graph_path << "\n";
  return 0;
}

int run_compare(const std::vector<std::string>& sources, const std::string& out_path) {
  cafe::require(sources.size() >= 2, "bad-config", "compare needs at least 2 score sources");
  cafe::ScoreTable table;
  for (const auto& src : sources) {
    const auto stem = std::filesystem::path(src).stem().string();
    if (src.size() > 5 && src.substr(src.size() - 5) == ".json") {
      std::ifstream in(src);
      cafe::require(in.good(), "file-not-found", "cannot open report '" + src + "'");
      json doc;
      in >> doc;
      const auto& methods = doc.at("methods");
      if (methods.contains("cafe")) {
        std::map<std::string, double> scores;
        for (const auto& [f, e] : methods["cafe"]["scores"].items())
          scores[f] = e["total"].get<double>();
        table.add_source(stem + ":cafe", scores);
      }
      if (methods.contains("fuzz")) {
        std::map<std::string, double> scores;
        for (const auto& [f, e] : methods["fuzz"]["scores"].items())
          scores[f] = e["total"].get<double>();
        table.add_source(stem + ":fuzz", scores);
      }
      if (methods.contains("perm")) {
        std::map<std::string, double> scores;
        for (const auto& [f, v] : methods["perm"]["scores"].items())
          scores[f] = v.get<double>();
        table.add_source(stem + ":perm", scores);
      }
    } else {
      table.add_source(stem, cafe::load_score_file(src));
    }
  }
  cafe::require(table.sources.size() >= 2, "bad-config",
                "the given sources contain fewer than 2 score sets");
  table.finalize_flags();
  const std::string csv = table.to_csv();
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path);
    cafe::require(out.good(), "io-error", "cannot write '" + out_path + "'");
    out << csv;
    std::cout << "comparison table written to " << out_path << "\n";
  }
  for (const auto& flag : table.missing_flags) std::cerr << "note: " << flag << "\n";
  return 0;
}

int run_bench(const std::string& graph_path, const std::string& data_path,
              const std::string& model_kind, int repeats, int samples, std::uint64_t seed) {
  const auto graph = cafe::load_graph(graph_path);
  const auto ds = cafe::load_dataset(data_path, graph);
  cafe::TrainOptions topts;
  topts.seed = seed;
  const auto model =
      cafe::BuiltinModel::train(cafe::model_kind_from_string(model_kind), ds, ds.feature_names(), topts);
  const auto sem = cafe::fit_sem(graph, ds);
  const auto results = cafe::benchmark(graph, sem, ds, *model, repeats, samples);
  std::cout << "method,median_seconds\n";
  for (const auto& [name, entry] : results)
    std::cout << name << "," << entry.median_seconds << "\n";
  return 0;
}

int run_perturb(const std::string& graph_path, const std::string& kind, double fraction,
                std::uint64_t seed, const std::string& out_path, const std::string& data_path,
                const std::string& model_kind) {
  const auto graph = cafe::load_graph(graph_path);
  cafe::PerturbationSpec spec;
  spec.kind = cafe::perturbation_kind_from_string(kind);
  spec.fraction = fraction;
  spec.seed = seed;
  const auto perturbed = cafe::perturb_graph(graph, spec);
  cafe::save_graph(perturbed, out_path);
  std::cout << "perturbed graph written to " << out_path << " (" << perturbed.edges().size()
            << " edges, was " << graph.edges().size() << ")\n";
  if (!data_path.empty()) {
    const auto ds = cafe::load_dataset(data_path, graph);
    cafe::TrainOptions topts;
    topts.seed = seed;
    const auto model = cafe::BuiltinModel::train(cafe::model_kind_from_string(model_kind), ds,
                                                 ds.feature_names(), topts);
    const double pct = cafe::rank_change(graph, perturbed, ds, *model);
    std::cout << "rank change: " << pct << "%\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causal unlearning verification toolkit"};
  app.require_subcommand(1);

  VerifyOptions vopt;
  auto* verify = app.add_subcommand("verify", "audit a model against an unlearning target");
  verify->add_option("--graph", vopt.graph_path, "causal graph file")->required();
  verify->add_option("--data", vopt.data_path, "audit dataset (csv)")->required();
  verify->add_option("--model", vopt.model_kind, "builtin model kind (linear|logistic|forest|mlp)");
  verify->add_option("--external-cmd", vopt.external_cmd, "external model command (wire protocol)");
  verify->add_option("--target-features", vopt.target_features, "features to audit")
      ->required()
      ->delimiter(',');
  verify->add_option("--where", vopt.where, "subgroup predicate, e.g. \"age>50\"");
  verify->add_option("--method", vopt.method, "fuzz|cafe|perm|fairness|all");
  verify->add_option("--mode", vopt.mode, "fuzz mode: total|direct|paths");
  verify->add_option("--estimator", vopt.estimator, "cafe estimator: regression|stratified");
  verify->add_option("--tau", vopt.tau, "verdict threshold (default: 1% of outcome sd)");
  verify->add_option("--samples", vopt.samples, "fuzz samples per (instance, feature)");
  verify->add_option("--strategy", vopt.strategy, "intervention strategy: empirical|grid|pair");
  verify->add_option("--seed", vopt.seed, "random seed");
  verify->add_option("--train-drop", vopt.train_drop, "features excluded from training")
      ->delimiter(',');
  verify->add_option("--drop-rows", vopt.drop_rows, "predicate for rows excluded from training");
  verify->add_option("--threshold", vopt.threshold, "positive-label threshold for fairness");
  verify->add_flag("--bootstrap", vopt.bootstrap, "report seed-resampling spread of totals");
  verify->add_option("--out", vopt.out_path, "report path (json)");

  std::string gen_spec, gen_out = ".";
  auto* generate = app.add_subcommand("generate", "sample a dataset from a generator spec");
  generate->add_option("--spec", gen_spec, "generator spec file")->required();
  generate->add_option("--out-dir", gen_out, "output directory");

  std::vector<std::string> cmp_sources;
  std::string cmp_out;
  auto* compare = app.add_subcommand("compare", "side-by-side score table across methods");
  compare->add_option("--sources", cmp_sources, "report json / score csv files")
      ->required()
      ->expected(-1);
  compare->add_option("--out", cmp_out, "output csv (default: stdout)");

  std::string bench_graph, bench_data, bench_model = "linear";
  int bench_repeats = 5, bench_samples = 10;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "wall-time comparison of the methods");
  bench->add_option("--graph", bench_graph)->required();
  bench->add_option("--data", bench_data)->required();
  bench->add_option("--model", bench_model, "builtin model kind");
  bench->add_option("--repeats", bench_repeats, "timed repeats (>= 3)");
  bench->add_option("--samples", bench_samples, "fuzz samples");
  bench->add_option("--seed", bench_seed);

  std::string pert_graph, pert_kind = "remove", pert_out = "perturbed_graph.json";
  std::string pert_data, pert_model = "linear";
  double pert_fraction = 0.5;
  std::uint64_t pert_seed = 0;
  auto* perturb = app.add_subcommand("perturb", "graph mis-specification harness");
  perturb->add_option("--graph", pert_graph)->required();
  perturb->add_option("--kind", pert_kind, "add|remove|full");
  perturb->add_option("--fraction", pert_fraction, "share of |E| to add or remove");
  perturb->add_option("--seed", pert_seed);
  perturb->add_option("--out", pert_out, "perturbed graph path");
  perturb->add_option("--data", pert_data, "optional: dataset for a rank-change run");
  perturb->add_option("--model", pert_model, "builtin model kind for the rank-change run");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(verify)) return run_verify(vopt);
    if (app.got_subcommand(generate)) return run_generate(gen_spec, gen_out);
    if (app.got_subcommand(compare)) return run_compare(cmp_sources, cmp_out);
    if (app.got_subcommand(bench))
      return run_bench(bench_graph, bench_data, bench_model, bench_repeats, bench_samples,
                       bench_seed);
    if (app.got_subcommand(perturb))
      return run_perturb(pert_graph, pert_kind, pert_fraction, pert_seed, pert_out, pert_data,
                         pert_model);
  } catch (const cafe::Error& e) {
    return fail_with(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

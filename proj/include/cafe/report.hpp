#pragma once

#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cafe/baselines.hpp"
#include "cafe/estimator.hpp"
#include "cafe/fuzz.hpp"
#include "cafe/robustness.hpp"
#include "cafe/util.hpp"

namespace cafe {

inline constexpr const char* kToolVersion = "0.1.0";

/// Full audit output: per-feature effects per method, rankings, paths,
/// baselines, verdict, subgroup breakdowns and provenance. Everything except
/// the `run` key (timestamp and wall times) is a pure function of the run
/// configuration and seed, so reports are byte-reproducible modulo that one
/// key.
struct InfluenceReport {
  nlohmann::json payload = nlohmann::json::object();  // deterministic part
  nlohmann::json run = nlohmann::json::object();      // timestamp + timings

  nlohmann::json document() const {
    nlohmann::json doc = payload;
    doc["run"] = run;
    return doc;
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "io-error", "cannot write report '" + path + "'");
    out << document().dump(2) << "\n";
  }
};

namespace detail {

inline nlohmann::json effect_json(const FeatureEffect& e) {
  return {{"total", e.total}, {"direct", e.direct}, {"indirect", e.indirect}};
}

}  // namespace detail

inline nlohmann::json influence_score_json(const InfluenceScore& score) {
  nlohmann::json j;
  for (const auto& name : score.features) {
    nlohmann::json f = detail::effect_json(score.effects.at(name));
    if (const auto it = score.max_abs_delta.find(name); it != score.max_abs_delta.end())
      f["max_abs_delta"] = it->second;
    if (const auto it = score.instance_count.find(name); it != score.instance_count.end())
      f["instances"] = it->second;
    if (const auto it = score.samples_per_instance.find(name);
        it != score.samples_per_instance.end())
      f["samples_per_instance"] = it->second;
    if (const auto it = score.path_scores.find(name); it != score.path_scores.end()) {
      nlohmann::json paths = nlohmann::json::array();
      for (const auto& p : it->second)
        paths.push_back({{"path", p.path}, {"score", p.score}});
      f["paths"] = paths;
    }
    j[name] = std::move(f);
  }
  return j;
}

inline nlohmann::json cafe_result_json(const CafeResult& r) {
  nlohmann::json j;
  j["scores"] = influence_score_json(r.score);
  j["tau"] = r.tau;
  j["combined_total"] = r.combined_total;
  j["verdict"] = r.unlearned ? "unlearned" : "residual-influence";
  nlohmann::json meta;
  for (const auto& [name, m] : r.meta) {
    nlohmann::json jm{{"backdoor", m.backdoor}, {"mediators", m.mediators}};
    if (m.ridge_fallback) jm["ridge_fallback"] = true;
    if (m.dropped_mass > 0.0) jm["dropped_stratum_mass"] = m.dropped_mass;
    if (m.bootstrapped) jm["total_range"] = {m.total_lo, m.total_hi};
    meta[name] = std::move(jm);
  }
  j["adjustment"] = std::move(meta);
  return j;
}

inline std::string timestamp_utc() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Plot-ready comparison table: one row per feature, per-source normalized
/// score (max |score| scaled to 1) and rank. Missing entries are flagged.
struct ScoreTable {
  std::vector<std::string> sources;
  std::vector<std::string> features;  // union, first-seen order
  std::map<std::string, std::map<std::string, double>> raw;  // source -> feature -> score
  std::vector<std::string> missing_flags;

  void add_source(const std::string& name, const std::map<std::string, double>& scores) {
    sources.push_back(name);
    for (const auto& [f, v] : scores) {
      if (std::find(features.begin(), features.end(), f) == features.end())
        features.push_back(f);
      raw[name][f] = v;
    }
  }

  void finalize_flags() {
    for (const auto& src : sources)
      for (const auto& f : features)
        if (!raw[src].count(f)) missing_flags.push_back(src + " lacks " + f);
  }

  std::string to_csv() const {
    std::string out = "feature";
    for (const auto& s : sources) out += "," + s + "_norm," + s + "_rank";
    out += "\n";
    // per-source normalization and ranking
    std::map<std::string, double> scale;
    std::map<std::string, std::map<std::string, int>> ranks;
    for (const auto& s : sources) {
      double mx = 0.0;
      for (const auto& [f, v] : raw.at(s)) mx = std::max(mx, std::fabs(v));
      scale[s] = mx == 0.0 ? 1.0 : mx;
      std::vector<std::string> order;
      for (const auto& [f, v] : raw.at(s)) order.push_back(f);
      std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
        return std::fabs(raw.at(s).at(a)) > std::fabs(raw.at(s).at(b));
      });
      for (std::size_t i = 0; i < order.size(); ++i)
        ranks[s][order[i]] = static_cast<int>(i) + 1;
    }
    for (const auto& f : features) {
      out += f;
      for (const auto& s : sources) {
        if (raw.at(s).count(f)) {
          out += "," + util::format_double(raw.at(s).at(f) / scale.at(s));
          out += "," + std::to_string(ranks.at(s).at(f));
        } else {
          out += ",NA,NA";
        }
      }
      out += "\n";
    }
    return out;
  }
};

/// External baseline scores in the merge format: a comma-separated file with
/// a "feature,score" header.
inline std::map<std::string, double> load_score_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "file-not-found", "cannot open score file '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "bad-score-file", "empty score file");
  std::map<std::string, double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, "bad-score-file", "expected 'feature,score': " + line);
    double v = 0.0;
    require(detail::parse_number(line.substr(comma + 1), v), "bad-score-file",
            "bad score in line: " + line);
    out[line.substr(0, comma)] = v;
  }
  require(!out.empty(), "bad-score-file", "score file has no rows");
  return out;
}

}  // namespace cafe

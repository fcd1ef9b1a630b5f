// Reference implementation of the model side of the wire protocol: reads the
// handshake and answers {"rows": ...} requests with {"preds": ...} lines.
// Serves a saved model file or a column-echo, plus two deliberately broken
// modes used by the protocol tests.

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cafe/model.hpp"

int main(int argc, char** argv) {
  CLI::App app{"wire-protocol model server"};
  std::string model_path;
  int echo_column = 0;
  bool bad_count = false;
  bool garbage = false;
  app.add_option("--model", model_path, "serve a saved model file (json)");
  app.add_option("--echo", echo_column, "echo one input column as the prediction");
  app.add_flag("--bad-count", bad_count, "reply with one prediction too few");
  app.add_flag("--garbage", garbage, "reply with a non-JSON line");
  CLI11_PARSE(app, argc, argv);

  std::shared_ptr<cafe::BuiltinModel> model;
  if (!model_path.empty()) model = cafe::load_model(model_path);

  std::string line;
  if (!std::getline(std::cin, line)) return 1;  // handshake
  std::vector<std::string> features;
  try {
    features = nlohmann::json::parse(line).at("features").get<std::vector<std::string>>();
  } catch (const std::exception& e) {
    std::cerr << "bad handshake: " << e.what() << "\n";
    return 1;
  }

  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      std::cerr << "bad request: " << e.what() << "\n";
      return 1;
    }
    const auto& rows = req.at("rows");
    if (garbage) {
      std::cout << "this is not json\n" << std::flush;
      continue;
    }
    nlohmann::json preds = nlohmann::json::array();
    if (model) {
      cafe::Matrix m(rows.size(), features.size());
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < features.size(); ++c)
          m.at(r, c) = rows[r][c].get<double>();
      for (double v : model->predict(m)) preds.push_back(v);
    } else {
      for (const auto& row : rows) preds.push_back(row.at(static_cast<std::size_t>(echo_column)).get<double>());
    }
    if (bad_count && !preds.empty()) preds.erase(preds.size() - 1);
    std::cout << nlohmann::json{{"preds", preds}}.dump() << "\n" << std::flush;
  }
  return 0;
}

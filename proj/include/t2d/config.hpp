#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "t2d/data.hpp"
#include "t2d/error.hpp"
#include "t2d/kernel.hpp"
#include "t2d/neural.hpp"
#include "t2d/svm.hpp"

namespace t2d {

struct PipelineConfig {
  SplitSpec split;
  std::size_t folds = 5;
  SvmTrainConfig svm;
  std::optional<double> sigma;  // unset: sqrt(d / 2)
  NeuralConfig neural;
  double fusion_weight = 0.5;
  double threshold = 0.5;
  std::uint64_t seed = 42;
  // Unset: Pima defaults when the columns are present. Empty: no imputation.
  std::optional<std::vector<std::string>> zero_as_missing;
  std::vector<std::string> selected_columns;  // empty: every feature column

  void validate() const {
    if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0))
      throw usage_error("config: train_fraction must lie strictly between 0 and 1");
    if (folds < 2) throw usage_error("config: folds must be at least 2");
    if (!(threshold > 0.0 && threshold < 1.0)) throw usage_error("config: threshold must lie in (0, 1)");
    if (!(fusion_weight >= 0.0 && fusion_weight <= 1.0))
      throw usage_error("config: fusion_weight must lie in [0, 1]");
    if (sigma && !(*sigma > 0.0)) throw usage_error("config: sigma must be positive");
    svm.validate();
    neural.validate();
  }
};

/// Keys accepted in the key = value config file.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "train_fraction", "folds",         "seed",        "zero_as_missing", "selected_columns",
      "C",              "tolerance",     "max_passes",  "class_balance",   "sigma",
      "hidden_size",    "mlp_hidden",    "ensemble_size", "epochs",        "learning_rate",
      "dropout",        "pool_window",   "pool_stride", "fusion_weight",   "threshold"};
  return keys;
}

namespace detail {

inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  for (auto cell : split_commas(text))
    if (!cell.empty()) out.emplace_back(cell);
  return out;
}

inline double to_real(const std::string& key, std::string_view v) {
  auto r = parse_real(v);
  if (!r) throw usage_error("config: " + key + " expects a number, got '" + std::string(v) + "'");
  return *r;
}

inline std::uint64_t to_count(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw usage_error("config: " + key + " expects a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

inline bool to_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw usage_error("config: " + key + " expects true/false, got '" + std::string(v) + "'");
}

}  // namespace detail

/// Parses `key = value` lines; '#' starts a comment. Unknown keys are errors.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    std::string_view body = line;
    if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = detail::trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw usage_error("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key(detail::trim(body.substr(0, eq)));
    std::string value(detail::trim(body.substr(eq + 1)));
    if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end())
      throw usage_error("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    out[key] = value;
  }
  return out;
}

inline void apply_key_values(const std::map<std::string, std::string>& kv, PipelineConfig& cfg) {
  using namespace detail;
  for (const auto& [key, v] : kv) {
    if (key == "train_fraction") cfg.split.train_fraction = to_real(key, v);
    else if (key == "folds") cfg.folds = to_count(key, v);
    else if (key == "seed") cfg.seed = to_count(key, v);
    else if (key == "zero_as_missing") {
      if (v == "default") cfg.zero_as_missing.reset();
      else if (v == "none" || v.empty()) cfg.zero_as_missing = std::vector<std::string>{};
      else cfg.zero_as_missing = split_list(v);
    } else if (key == "selected_columns") cfg.selected_columns = split_list(v);
    else if (key == "C") cfg.svm.C = to_real(key, v);
    else if (key == "tolerance") cfg.svm.tolerance = to_real(key, v);
    else if (key == "max_passes") cfg.svm.max_passes = to_count(key, v);
    else if (key == "class_balance") cfg.svm.class_balance = to_bool(key, v);
    else if (key == "sigma") cfg.sigma = to_real(key, v);
    else if (key == "hidden_size") cfg.neural.hidden_size = to_count(key, v);
    else if (key == "mlp_hidden") {
      cfg.neural.mlp_hidden.clear();
      for (const auto& s : split_list(v)) cfg.neural.mlp_hidden.push_back(to_count(key, s));
    } else if (key == "ensemble_size") cfg.neural.ensemble_size = to_count(key, v);
    else if (key == "epochs") cfg.neural.epochs = to_count(key, v);
    else if (key == "learning_rate") cfg.neural.learning_rate = to_real(key, v);
    else if (key == "dropout") cfg.neural.dropout = to_real(key, v);
    else if (key == "pool_window") cfg.neural.pool_window = to_count(key, v);
    else if (key == "pool_stride") cfg.neural.pool_stride = to_count(key, v);
    else if (key == "fusion_weight") cfg.fusion_weight = to_real(key, v);
    else if (key == "threshold") cfg.threshold = to_real(key, v);
  }
  cfg.split.seed = cfg.seed;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  PipelineConfig cfg;
  apply_key_values(parse_key_values(buf.str()), cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON echo, embedded in model files and reports.

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["train_fraction"] = c.split.train_fraction;
  j["stratified"] = c.split.stratified;
  j["folds"] = c.folds;
  j["zero_as_missing"] = c.zero_as_missing ? nlohmann::ordered_json(*c.zero_as_missing)
                                           : nlohmann::ordered_json("default");
  j["selected_columns"] = c.selected_columns;
  j["svm"] = {{"C", c.svm.C},
              {"tolerance", c.svm.tolerance},
              {"max_passes", c.svm.max_passes ? nlohmann::ordered_json(*c.svm.max_passes)
                                              : nlohmann::ordered_json("100n")},
              {"class_balance", c.svm.class_balance},
              {"sigma", c.sigma ? nlohmann::ordered_json(*c.sigma) : nlohmann::ordered_json("sqrt(d/2)")}};
  j["neural"] = {{"hidden_size", c.neural.hidden_size},   {"mlp_hidden", c.neural.mlp_hidden},
                 {"ensemble_size", c.neural.ensemble_size}, {"epochs", c.neural.epochs},
                 {"learning_rate", c.neural.learning_rate}, {"dropout", c.neural.dropout},
                 {"pool_window", c.neural.pool_window},   {"pool_stride", c.neural.pool_stride}};
  j["fusion_weight"] = c.fusion_weight;
  j["threshold"] = c.threshold;
  return j;
}

inline PipelineConfig config_from_json(const nlohmann::ordered_json& j) {
  PipelineConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.split.seed = c.seed;
  c.split.train_fraction = j.at("train_fraction").get<double>();
  c.split.stratified = j.at("stratified").get<bool>();
  c.folds = j.at("folds").get<std::size_t>();
  if (j.at("zero_as_missing").is_array()) c.zero_as_missing = j["zero_as_missing"].get<std::vector<std::string>>();
  c.selected_columns = j.at("selected_columns").get<std::vector<std::string>>();
  const auto& s = j.at("svm");
  c.svm.C = s.at("C").get<double>();
  c.svm.tolerance = s.at("tolerance").get<double>();
  if (s.at("max_passes").is_number()) c.svm.max_passes = s["max_passes"].get<std::size_t>();
  c.svm.class_balance = s.at("class_balance").get<bool>();
  if (s.at("sigma").is_number()) c.sigma = s["sigma"].get<double>();
  const auto& n = j.at("neural");
  c.neural.hidden_size = n.at("hidden_size").get<std::size_t>();
  c.neural.mlp_hidden = n.at("mlp_hidden").get<std::vector<std::size_t>>();
  c.neural.ensemble_size = n.at("ensemble_size").get<std::size_t>();
  c.neural.epochs = n.at("epochs").get<std::size_t>();
  c.neural.learning_rate = n.at("learning_rate").get<double>();
  c.neural.dropout = n.at("dropout").get<double>();
  c.neural.pool_window = n.at("pool_window").get<std::size_t>();
  c.neural.pool_stride = n.at("pool_stride").get<std::size_t>();
  c.fusion_weight = j.at("fusion_weight").get<double>();
  c.threshold = j.at("threshold").get<double>();
  return c;
}

}  // namespace t2d

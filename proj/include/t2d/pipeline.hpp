#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "t2d/config.hpp"
#include "t2d/data.hpp"
#include "t2d/error.hpp"
#include "t2d/kernel.hpp"
#include "t2d/metrics.hpp"
#include "t2d/neural.hpp"
#include "t2d/svm.hpp"

namespace t2d {

/// Statistics learned from a training set and replayed on any later row.
struct Preprocessing {
  ImputeStats impute;
  Standardizer scaler;

  friend bool operator==(const Preprocessing&, const Preprocessing&) = default;

  std::vector<double> apply_row(std::span<const double> raw) const {
    std::vector<double> x(raw.begin(), raw.end());
    for (std::size_t k = 0; k < impute.columns.size(); ++k)
      if (x[impute.columns[k]] == 0.0) x[impute.columns[k]] = impute.medians[k];
    std::vector<double> out(x.size());
    scaler.apply_row(x, out);
    return out;
  }

  FeatureMatrix apply(const FeatureMatrix& raw) const {
    return apply_standardizer(scaler, apply_imputer(impute, raw));
  }
};

/// The fused classifier. Every branch reads the same feature columns through
/// the same preprocessing.
struct PipelineModel {
  PipelineConfig config;
  std::vector<std::string> feature_names;
  std::string label_name = "label";
  Preprocessing preprocessing;
  SvmModel svm;
  NeuralEnsemble neural;
  double fusion_weight = 0.5;
  double threshold = 0.5;
  double literal_fused_objective = 0.0;
  std::size_t svm_iterations = 0;
  bool svm_converged = true;

  std::size_t width() const { return feature_names.size(); }
};

// ---------------------------------------------------------------------------
// Feature contract

/// Applies the configured column selection; an empty selection keeps all.
inline FeatureMatrix select_features(const FeatureMatrix& raw, const PipelineConfig& cfg) {
  if (cfg.selected_columns.empty()) return raw;
  const auto cols = resolve_columns(raw.column_names(), cfg.selected_columns);
  return select_columns(raw, cols);
}

inline std::vector<std::size_t> zero_as_missing_columns(const FeatureMatrix& m, const PipelineConfig& cfg) {
  if (!cfg.zero_as_missing) return default_zero_as_missing(m);
  auto cols = resolve_columns(m.column_names(), *cfg.zero_as_missing);
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

inline Preprocessing fit_preprocessing(const FeatureMatrix& train, const PipelineConfig& cfg) {
  Preprocessing p;
  p.impute = fit_imputer(train, zero_as_missing_columns(train, cfg));
  p.scaler = fit_standardizer(apply_imputer(p.impute, train));
  return p;
}

// ---------------------------------------------------------------------------
// Training and scoring

/// Impute, standardize, then train the RBF machine on the standardized rows
/// and the pooled-LSTM/MLP ensemble on the same rows.
inline PipelineModel train_pipeline(const FeatureMatrix& train, const PipelineConfig& cfg) {
  cfg.validate();
  if (train.count_label(0) == 0 || train.count_label(1) == 0)
    throw data_error("train_pipeline: training data must contain both classes");

  PipelineModel model;
  model.config = cfg;
  model.feature_names = train.column_names();
  model.label_name = train.label_name();
  model.fusion_weight = cfg.fusion_weight;
  model.threshold = cfg.threshold;
  model.preprocessing = fit_preprocessing(train, cfg);
  const FeatureMatrix ready = model.preprocessing.apply(train);
  if (!ready.all_finite()) throw numeric_error("train_pipeline: non-finite value after preprocessing");

  const KernelSpec kernel = cfg.sigma ? KernelSpec::rbf(*cfg.sigma) : KernelSpec::rbf_default(ready.cols());
  SvmFit fit = train_rbf_svm(ready, cfg.svm, kernel);
  model.svm = std::move(fit.model);
  model.svm_iterations = fit.diagnostics.iterations;
  model.svm_converged = fit.diagnostics.converged;

  model.neural = train_ensemble(ready, cfg.neural, derive_seed(cfg.seed, 0x5eed));

  double mean_net = 0.0;
  for (std::size_t i = 0; i < ready.rows(); ++i) mean_net += model.neural.predict_proba(ready.row(i));
  mean_net /= static_cast<double>(ready.rows());
  model.literal_fused_objective = literal_modified_objective(model.svm, ready) + mean_net;
  return model;
}

struct BranchScores {
  double svm = 0.5;       // sigmoid of the decision value
  double ensemble = 0.5;  // weighted head average
};

inline void check_width(const PipelineModel& model, std::span<const double> x) {
  if (x.size() != model.width())
    throw data_error("input has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(model.width()));
}

inline BranchScores branch_scores(const PipelineModel& model, std::span<const double> raw) {
  check_width(model, raw);
  const auto x = model.preprocessing.apply_row(raw);
  return {sigmoid(decision_value(model.svm, x)), model.neural.predict_proba(x)};
}

inline double fuse_scores(double fusion_weight, const BranchScores& b) {
  return fusion_weight * b.svm + (1.0 - fusion_weight) * b.ensemble;
}

/// Per-sample fusion of the two branch scores on raw (unprocessed) features.
inline double combined_score(const PipelineModel& model, std::span<const double> raw) {
  return fuse_scores(model.fusion_weight, branch_scores(model, raw));
}

/// Positive iff the combined score reaches the threshold (inclusive).
inline Label predict(const PipelineModel& model, std::span<const double> raw) {
  return combined_score(model, raw) >= model.threshold ? Label{1} : Label{0};
}

inline ReportRow evaluate_model(const PipelineModel& model, const FeatureMatrix& data, std::string name) {
  std::vector<double> scores(data.rows());
  std::vector<Label> preds(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    scores[i] = combined_score(model, data.row(i));
    preds[i] = scores[i] >= model.threshold ? Label{1} : Label{0};
  }
  return evaluate_scores(std::move(name), scores, preds, data.labels());
}

// ---------------------------------------------------------------------------
// Single split: train on one side, report both sides.

struct TrainResult {
  PipelineModel model;
  SplitIndices split;
  ReportRow training;
  ReportRow testing;
};

inline TrainResult train_and_evaluate(const FeatureMatrix& data, const PipelineConfig& cfg) {
  cfg.validate();
  SplitSpec spec = cfg.split;
  spec.seed = cfg.seed;
  TrainResult r;
  r.split = stratified_split_indices(data, spec);
  const FeatureMatrix train = data.subset(r.split.train);
  const FeatureMatrix test = data.subset(r.split.test);
  const double train_ms = capture_timing([&] { r.model = train_pipeline(train, cfg); });
  r.training = evaluate_model(r.model, train, "training");
  const double eval_ms = capture_timing([&] { r.testing = evaluate_model(r.model, test, "testing"); });
  for (ReportRow* row : {&r.training, &r.testing}) {
    row->timing = {train_ms, eval_ms, r.model.neural.epochs_trained};
    row->literal_fused_objective = r.model.literal_fused_objective;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldResult {
  ReportRow row;
  Preprocessing preprocessing;
  std::vector<std::size_t> test_indices;
};

struct CrossValidationResult {
  FoldAssignment folds;
  std::vector<FoldResult> fold_results;
  ReportRow aggregate;
};

/// Fold f trains with seed + f on the other folds; preprocessing is fit on
/// the training folds only. With `parallel` the folds run on separate threads;
/// results are identical either way.
inline CrossValidationResult cross_validate(const FeatureMatrix& data, const PipelineConfig& cfg,
                                            bool parallel = false,
                                            const std::function<void(const ReportRow&)>& on_fold = {}) {
  cfg.validate();
  CrossValidationResult out;
  out.folds = make_folds(data, cfg.folds, cfg.seed);
  out.fold_results.resize(cfg.folds);

  auto run_fold = [&](std::size_t f) {
    PipelineConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + f;
    fold_cfg.split.seed = fold_cfg.seed;
    const auto train_idx = out.folds.train_indices(f);
    const auto test_idx = out.folds.test_indices(f);
    const FeatureMatrix train = data.subset(train_idx);
    const FeatureMatrix test = data.subset(test_idx);
    PipelineModel model;
    const double train_ms = capture_timing([&] { model = train_pipeline(train, fold_cfg); });
    FoldResult& res = out.fold_results[f];
    const double eval_ms = capture_timing([&] { res.row = evaluate_model(model, test, "fold " + std::to_string(f + 1)); });
    res.row.timing = {train_ms, eval_ms, model.neural.epochs_trained};
    res.row.literal_fused_objective = model.literal_fused_objective;
    res.preprocessing = model.preprocessing;
    res.test_indices = test_idx;
  };

  if (parallel) {
    std::vector<std::exception_ptr> errors(cfg.folds);
    {
      std::vector<std::jthread> workers;
      for (std::size_t f = 0; f < cfg.folds; ++f)
        workers.emplace_back([&, f] {
          try {
            run_fold(f);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    if (on_fold)
      for (const auto& r : out.fold_results) on_fold(r.row);
  } else {
    for (std::size_t f = 0; f < cfg.folds; ++f) {
      run_fold(f);
      if (on_fold) on_fold(out.fold_results[f].row);
    }
  }

  std::vector<ReportRow> rows;
  for (const auto& r : out.fold_results) rows.push_back(r.row);
  out.aggregate = aggregate_rows("mean", rows);
  return out;
}

// ---------------------------------------------------------------------------
// Model document

inline constexpr const char* kModelSchema = "t2d-model/1";

inline nlohmann::ordered_json model_to_json(const PipelineModel& m) {
  using json = nlohmann::ordered_json;
  json j;
  j["schema"] = kModelSchema;
  j["tool_version"] = kToolVersion;
  j["config"] = config_to_json(m.config);
  j["feature_names"] = m.feature_names;
  j["label_name"] = m.label_name;
  j["preprocessing"] = {{"zero_as_missing_columns", m.preprocessing.impute.columns},
                        {"medians", m.preprocessing.impute.medians},
                        {"mean", m.preprocessing.scaler.mean},
                        {"scale", m.preprocessing.scaler.scale}};
  j["svm"] = {{"kernel", to_string(m.svm.kernel.kind)},
              {"sigma", m.svm.kernel.sigma},
              {"box_constraint", m.svm.box_constraint},
              {"bias", m.svm.bias},
              {"width", m.svm.width},
              {"support_coefficients", m.svm.support_coefficients},
              {"support_rows", m.svm.support_rows},
              {"iterations", m.svm_iterations},
              {"converged", m.svm_converged}};
  const auto& nn = m.neural;
  json heads = json::array();
  for (const auto& h : nn.heads) heads.push_back({{"sizes", h.sizes}, {"weights", h.weights}, {"biases", h.biases}});
  j["neural"] = {{"pool_window", nn.pool_window},
                 {"pool_stride", nn.pool_stride},
                 {"epochs_trained", nn.epochs_trained},
                 {"lstm",
                  {{"input_size", nn.lstm.input_size},
                   {"hidden_size", nn.lstm.hidden_size},
                   {"w_input", nn.lstm.w_input},
                   {"w_recurrent", nn.lstm.w_recurrent},
                   {"bias", nn.lstm.bias}}},
                 {"heads", std::move(heads)},
                 {"weights", nn.weights}};
  j["fusion_weight"] = m.fusion_weight;
  j["threshold"] = m.threshold;
  j["literal_fused_objective"] = m.literal_fused_objective;
  return j;
}

inline PipelineModel model_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("schema").get<std::string>() != kModelSchema) throw data_error("model: unsupported schema");
    PipelineModel m;
    m.config = config_from_json(j.at("config"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.label_name = j.at("label_name").get<std::string>();
    const auto& p = j.at("preprocessing");
    m.preprocessing.impute.columns = p.at("zero_as_missing_columns").get<std::vector<std::size_t>>();
    m.preprocessing.impute.medians = p.at("medians").get<std::vector<double>>();
    m.preprocessing.scaler.mean = p.at("mean").get<std::vector<double>>();
    m.preprocessing.scaler.scale = p.at("scale").get<std::vector<double>>();
    const auto& s = j.at("svm");
    m.svm.kernel = {kernel_kind_from_string(s.at("kernel").get<std::string>()), s.at("sigma").get<double>()};
    m.svm.box_constraint = s.at("box_constraint").get<double>();
    m.svm.bias = s.at("bias").get<double>();
    m.svm.width = s.at("width").get<std::size_t>();
    m.svm.support_coefficients = s.at("support_coefficients").get<std::vector<double>>();
    m.svm.support_rows = s.at("support_rows").get<std::vector<double>>();
    m.svm_iterations = s.at("iterations").get<std::size_t>();
    m.svm_converged = s.at("converged").get<bool>();
    const auto& n = j.at("neural");
    m.neural.pool_window = n.at("pool_window").get<std::size_t>();
    m.neural.pool_stride = n.at("pool_stride").get<std::size_t>();
    m.neural.epochs_trained = n.at("epochs_trained").get<std::size_t>();
    const auto& l = n.at("lstm");
    m.neural.lstm.input_size = l.at("input_size").get<std::size_t>();
    m.neural.lstm.hidden_size = l.at("hidden_size").get<std::size_t>();
    m.neural.lstm.w_input = l.at("w_input").get<std::vector<double>>();
    m.neural.lstm.w_recurrent = l.at("w_recurrent").get<std::vector<double>>();
    m.neural.lstm.bias = l.at("bias").get<std::vector<double>>();
    for (const auto& h : n.at("heads")) {
      MlpNetwork net;
      net.sizes = h.at("sizes").get<std::vector<std::size_t>>();
      net.weights = h.at("weights").get<std::vector<std::vector<double>>>();
      net.biases = h.at("biases").get<std::vector<std::vector<double>>>();
      m.neural.heads.push_back(std::move(net));
    }
    m.neural.weights = n.at("weights").get<std::vector<double>>();
    m.fusion_weight = j.at("fusion_weight").get<double>();
    m.threshold = j.at("threshold").get<double>();
    m.literal_fused_objective = j.at("literal_fused_objective").get<double>();

    const std::size_t d = m.feature_names.size();
    if (m.preprocessing.scaler.mean.size() != d || m.preprocessing.scaler.scale.size() != d || m.svm.width != d ||
        m.svm.support_rows.size() != m.svm.support_coefficients.size() * d ||
        m.neural.heads.size() != m.neural.weights.size())
      throw data_error("model: inconsistent dimensions");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("model: malformed document: ") + e.what());
  }
}

inline std::string serialize_model(const PipelineModel& m) { return model_to_json(m).dump() + "\n"; }

inline void save_model(const PipelineModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write model file: " + path);
  out << serialize_model(m);
  if (!out) throw data_error("write failed: " + path);
}

inline PipelineModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open model file: " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw data_error("model: cannot parse " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace t2d

// t2d: train, cross-validate, evaluate and apply the fused SVM/LSTM onset
// classifier on CSV data.
//
// stdout carries data (reports, predictions); stderr carries diagnostics.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "t2d/t2d.hpp"

namespace {

namespace fs = std::filesystem;
using namespace t2d;

constexpr const char* kConfigHelp = R"(Config file: one `key = value` per line, '#' comments.
  train_fraction  (0,1), default 0.7        folds          >= 2, default 5
  seed            integer, default 42       selected_columns  names or indices, comma list
  zero_as_missing names/indices | none | default (Pima columns when present)
  C               box constraint, 1.0       tolerance      KKT tolerance, 1e-3
  max_passes      SMO iteration cap, 100n   class_balance  true|false, false
  sigma           RBF width, sqrt(d/2)      hidden_size    LSTM blocks, 70
  mlp_hidden      head widths, 12,8         ensemble_size  heads, 3
  epochs          50                        learning_rate  AdaGrad rate, 0.2
  dropout         0.35                      pool_window / pool_stride  2 / 2
  fusion_weight   SVM share of the score, 0.5   threshold  (0,1), 0.5
Seed precedence: --seed > config file > 42.)";

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string format = "json";
  std::string header = "auto";
  bool no_timing = false;
};

HeaderMode header_mode(const std::string& s) {
  if (s == "auto") return HeaderMode::detect;
  if (s == "yes") return HeaderMode::present;
  if (s == "no") return HeaderMode::absent;
  throw usage_error("--header must be auto, yes or no");
}

void require_readable(const std::string& path) {
  if (!fs::exists(path)) throw data_error("input file does not exist: " + path);
}

void require_writable_target(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw data_error("output directory does not exist: " + parent.string());
}

PipelineConfig resolve_config(const CommonOptions& o, std::optional<std::size_t> folds) {
  PipelineConfig cfg;
  if (!o.config_path.empty()) {
    require_readable(o.config_path);
    cfg = load_config(o.config_path);
  }
  if (o.seed) cfg.seed = *o.seed;
  cfg.split.seed = cfg.seed;
  if (folds) cfg.folds = *folds;
  cfg.validate();
  return cfg;
}

void write_text(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write output file: " + path);
  out << text;
  if (!out) throw data_error("write failed: " + path);
}

EvaluationReport base_report(const std::string& command, const PipelineConfig& cfg, std::size_t n,
                             const CommonOptions& o) {
  EvaluationReport r;
  r.command = command;
  r.seed = cfg.seed;
  r.n_samples = n;
  r.include_timing = !o.no_timing;
  r.config = config_to_json(cfg);
  return r;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config) {
  if (with_config) {
    cmd->add_option("--config", o.config_path, "Key-value config file (see below)");
    cmd->add_option("--seed", o.seed, "Seed; overrides the config file");
  }
  cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"json", "table"}));
  cmd->add_option("--header", o.header, "CSV header row")->check(CLI::IsMember({"auto", "yes", "no"}));
  cmd->add_flag("--no-timing", o.no_timing, "Omit wall-clock fields so reports are byte-reproducible");
  cmd->footer(kConfigHelp);
}

int run_train(const std::string& data_path, const std::string& model_out, const std::string& report_out,
              const CommonOptions& o) {
  require_readable(data_path);
  require_writable_target(model_out);
  if (!report_out.empty()) require_writable_target(report_out);
  const PipelineConfig cfg = resolve_config(o, std::nullopt);
  const FeatureMatrix data = select_features(load_csv(data_path, header_mode(o.header)), cfg);

  TrainResult result = train_and_evaluate(data, cfg);
  if (!result.model.svm_converged)
    std::cerr << "warning: SMO stopped at the iteration cap before reaching tolerance\n";
  save_model(result.model, model_out);

  EvaluationReport report = base_report("train", cfg, data.rows(), o);
  report.rows = {result.training, result.testing};
  write_text(render_report(report, report_format_from_string(o.format)), report_out);
  return 0;
}

int run_cv(const std::string& data_path, std::optional<std::size_t> folds, bool parallel,
           const std::string& report_out, const CommonOptions& o) {
  require_readable(data_path);
  if (!report_out.empty()) require_writable_target(report_out);
  const PipelineConfig cfg = resolve_config(o, folds);
  const FeatureMatrix data = select_features(load_csv(data_path, header_mode(o.header)), cfg);

  const auto cv = cross_validate(data, cfg, parallel, [&](const ReportRow& row) {
    std::cerr << row.name << ": accuracy " << row.accuracy << ", roc_auc "
              << (row.roc_auc ? std::to_string(*row.roc_auc) : std::string("undefined")) << "\n";
  });
  EvaluationReport report = base_report("cv", cfg, data.rows(), o);
  for (const auto& f : cv.fold_results) report.rows.push_back(f.row);
  report.aggregate = cv.aggregate;
  write_text(render_report(report, report_format_from_string(o.format)), report_out);
  return 0;
}

/// Projects a raw table onto the model's feature columns, by name when the
/// file has a header and by position otherwise.
FeatureMatrix align_to_model(const CsvTable& table, const PipelineModel& model, bool named, bool need_labels) {
  const std::size_t d = model.width();
  std::vector<std::size_t> cols;
  std::optional<std::size_t> label_col;
  if (named) {
    std::vector<std::string> missing;
    for (const auto& name : model.feature_names) {
      auto it = std::find(table.names.begin(), table.names.end(), name);
      if (it == table.names.end()) missing.push_back(name);
      else cols.push_back(static_cast<std::size_t>(it - table.names.begin()));
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw data_error("missing feature column(s): " + list);
    }
    auto it = std::find(table.names.begin(), table.names.end(), model.label_name);
    if (it != table.names.end()) label_col = static_cast<std::size_t>(it - table.names.begin());
  } else {
    if (table.cols() != d && table.cols() != d + 1)
      throw data_error("expected " + std::to_string(d) + " feature columns (plus optional label), found " +
                       std::to_string(table.cols()));
    for (std::size_t j = 0; j < d; ++j) cols.push_back(j);
    if (table.cols() == d + 1) label_col = d;
  }
  if (need_labels && !label_col) throw data_error("label column '" + model.label_name + "' not found");

  std::vector<double> values;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < table.rows; ++i) {
    const double* r = table.cells.data() + i * table.cols();
    for (std::size_t j : cols) values.push_back(r[j]);
    Label y = 0;
    if (label_col) {
      const double v = r[*label_col];
      if (v != 0.0 && v != 1.0) {
        if (need_labels) throw data_error("label at row " + std::to_string(i + 1) + " is not 0 or 1");
      } else {
        y = static_cast<Label>(v);
      }
    }
    labels.push_back(y);
  }
  return {table.rows, d, std::move(values), std::move(labels), model.feature_names, model.label_name};
}

bool table_is_named(const CsvTable& t) { return t.cols() == 0 || t.names.front() != "col_0"; }

int run_predict(const std::string& model_path, const std::string& data_path, const CommonOptions& o) {
  require_readable(model_path);
  require_readable(data_path);
  const PipelineModel model = load_model(model_path);
  const CsvTable table = read_csv_table(data_path, header_mode(o.header));
  if (table.rows == 0) return 0;
  const FeatureMatrix data = align_to_model(table, model, table_is_named(table), false);
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double score = combined_score(model, data.row(i));
    std::snprintf(buf, sizeof buf, "%zu,%.10f,%d\n", i, score, score >= model.threshold ? 1 : 0);
    out += buf;
  }
  std::cout << out;
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& data_path, const std::string& report_out,
                 const CommonOptions& o) {
  require_readable(model_path);
  require_readable(data_path);
  if (!report_out.empty()) require_writable_target(report_out);
  const PipelineModel model = load_model(model_path);
  const CsvTable table = read_csv_table(data_path, header_mode(o.header));
  if (table.rows == 0) throw data_error(data_path + ": empty dataset");
  const FeatureMatrix data = align_to_model(table, model, table_is_named(table), true);
  ReportRow row;
  const double ms = capture_timing([&] { row = evaluate_model(model, data, "evaluation"); });
  row.timing = {0.0, ms, model.neural.epochs_trained};
  row.literal_fused_objective = model.literal_fused_objective;
  EvaluationReport report = base_report("evaluate", model.config, data.rows(), o);
  report.rows = {row};
  write_text(render_report(report, report_format_from_string(o.format)), report_out);
  return 0;
}

struct SynthOptions {
  std::size_t n = 768;
  std::size_t features = 8;
  double fraction = 0.35;
  double separation = 2.0;
  std::uint64_t seed = 42;
  std::string out;
};

int run_synth(const SynthOptions& s) {
  require_writable_target(s.out);
  const FeatureMatrix m = synth_dataset(s.n, s.features, s.fraction, s.separation, s.seed);
  write_csv(m, s.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Type 2 diabetes onset classifier: RBF-kernel SVM fused with an LSTM/MLP ensemble"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1, 1);

  CommonOptions common;
  std::string data_path, model_path, out_path, report_path;
  std::optional<std::size_t> folds;
  bool parallel = false;

  auto* train = app.add_subcommand("train", "Train on a stratified split, report both sides, save the model");
  train->add_option("data", data_path, "Labelled CSV (last column is the 0/1 label)")->required();
  train->add_option("--out", out_path, "Model file to write")->required();
  train->add_option("--report", report_path, "Write the report here instead of stdout");
  add_common(train, common, true);

  auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation of the full pipeline");
  cv->add_option("data", data_path, "Labelled CSV")->required();
  cv->add_option("--folds", folds, "Fold count; overrides the config file");
  cv->add_flag("--parallel", parallel, "Run folds on separate threads (results are unchanged)");
  cv->add_option("--out", report_path, "Write the report here instead of stdout");
  add_common(cv, common, true);

  auto* evaluate = app.add_subcommand("evaluate", "Score a saved model on a labelled CSV");
  evaluate->add_option("model", model_path, "Model file from `train`")->required();
  evaluate->add_option("data", data_path, "Labelled CSV")->required();
  evaluate->add_option("--out", report_path, "Write the report here instead of stdout");
  add_common(evaluate, common, false);

  auto* predict_cmd = app.add_subcommand("predict", "Print index,score,label for every row");
  predict_cmd->add_option("model", model_path, "Model file from `train`")->required();
  predict_cmd->add_option("data", data_path, "CSV with the model's feature columns")->required();
  predict_cmd->add_option("--header", common.header, "CSV header row")->check(CLI::IsMember({"auto", "yes", "no"}));

  SynthOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Write a synthetic two-Gaussian dataset as CSV");
  synth->add_option("--n", synth_opts.n, "Row count (>= 4)");
  synth->add_option("--features", synth_opts.features, "Feature count");
  synth->add_option("--fraction", synth_opts.fraction, "Positive-class fraction in (0,1)");
  synth->add_option("--separation", synth_opts.separation, "Distance between class means");
  synth->add_option("--seed", synth_opts.seed, "Generator seed");
  synth->add_option("--out", synth_opts.out, "CSV file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*train) return run_train(data_path, out_path, report_path, common);
    if (*cv) return run_cv(data_path, folds, parallel, report_path, common);
    if (*evaluate) return run_evaluate(model_path, data_path, report_path, common);
    if (*predict_cmd) return run_predict(model_path, data_path, common);
    if (*synth) return run_synth(synth_opts);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::numeric);
  }
  return static_cast<int>(ErrorKind::usage);
}

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "t2d/data.hpp"
#include "t2d/error.hpp"

namespace t2d {

struct ConfusionMatrix {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size())
    throw usage_error("confusion: predictions and labels differ in length");
  if (labels.empty()) throw usage_error("confusion: empty input");
  ConfusionMatrix c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1, y = labels[i] == 1;
    if (p && y) ++c.tp;
    else if (!p && !y) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

/// (TP + TN) / (TP + TN + FP + FN)
inline double accuracy(const ConfusionMatrix& c) {
  if (c.total() == 0) throw usage_error("accuracy: empty confusion matrix");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

/// The "AUC" formula as printed, TP / (TP + FP). This is precision; it is
/// reported under its own name and never substituted for the ROC-AUC.
inline std::optional<double> paper_auc(const ConfusionMatrix& c) {
  if (c.tp + c.fp == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

/// P(score of random positive > score of random negative), ties count 1/2.
/// Mann-Whitney U from mid-ranks of the pooled sorted scores.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw usage_error("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (Label y : labels) n_pos += y == 1;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += mid_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

// ---------------------------------------------------------------------------
// Timing

struct TimingReport {
  double train_ms = 0.0;
  double evaluate_ms = 0.0;
  std::size_t epochs_elapsed = 0;

  friend bool operator==(const TimingReport&, const TimingReport&) = default;
};

/// Runs `block` and returns its monotonic wall time in milliseconds.
template <typename F>
double capture_timing(F&& block) {
  const auto start = std::chrono::steady_clock::now();
  std::forward<F>(block)();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

// ---------------------------------------------------------------------------
// Reports

/// One evaluated run: a fold, a split side, or an aggregate.
struct ReportRow {
  std::string name;
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::optional<double> paper_auc;
  std::optional<double> roc_auc;
  TimingReport timing;
  std::optional<double> literal_fused_objective;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

inline ReportRow evaluate_scores(std::string name, std::span<const double> scores,
                                 std::span<const Label> predictions, std::span<const Label> labels) {
  ReportRow row;
  row.name = std::move(name);
  row.confusion = confusion(predictions, labels);
  row.accuracy = accuracy(row.confusion);
  row.paper_auc = paper_auc(row.confusion);
  row.roc_auc = roc_auc(scores, labels);
  return row;
}

/// Unweighted mean over rows. Confusion counts are summed; an optional metric
/// averages the rows where it is defined and is undefined if none are.
inline ReportRow aggregate_rows(std::string name, std::span<const ReportRow> rows) {
  if (rows.empty()) throw usage_error("aggregate: no rows");
  ReportRow agg;
  agg.name = std::move(name);
  const double n = static_cast<double>(rows.size());
  auto mean_opt = [&](auto member) -> std::optional<double> {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows)
      if (r.*member) {
        sum += *(r.*member);
        ++count;
      }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  };
  double acc = 0.0;
  for (const auto& r : rows) {
    agg.confusion += r.confusion;
    acc += r.accuracy;
    agg.timing.train_ms += r.timing.train_ms;
    agg.timing.evaluate_ms += r.timing.evaluate_ms;
    agg.timing.epochs_elapsed += r.timing.epochs_elapsed;
  }
  agg.accuracy = acc / n;
  agg.paper_auc = mean_opt(&ReportRow::paper_auc);
  agg.roc_auc = mean_opt(&ReportRow::roc_auc);
  agg.literal_fused_objective = mean_opt(&ReportRow::literal_fused_objective);
  agg.timing.train_ms /= n;
  agg.timing.evaluate_ms /= n;
  agg.timing.epochs_elapsed = static_cast<std::size_t>(
      std::llround(static_cast<double>(agg.timing.epochs_elapsed) / n));
  return agg;
}

inline constexpr const char* kReportSchema = "t2d-report/1";
inline constexpr const char* kToolVersion = "t2d 1.0.0";

struct EvaluationReport {
  std::string command;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  std::vector<ReportRow> rows;
  std::optional<ReportRow> aggregate;
  bool include_timing = true;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

enum class ReportFormat { json, table };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "table") return ReportFormat::table;
  throw usage_error("unknown report format: " + s);
}

namespace detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::optional<double> json_optional(const nlohmann::ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::ordered_json row_to_json(const ReportRow& r, bool timing) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["confusion"] = {{"tp", r.confusion.tp}, {"tn", r.confusion.tn}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}};
  j["accuracy"] = r.accuracy;
  j["paper_auc"] = optional_json(r.paper_auc);
  j["roc_auc"] = optional_json(r.roc_auc);
  j["literal_fused_objective"] = optional_json(r.literal_fused_objective);
  nlohmann::ordered_json t;
  if (timing) {
    t["train_ms"] = r.timing.train_ms;
    t["evaluate_ms"] = r.timing.evaluate_ms;
  }
  t["epochs_elapsed"] = r.timing.epochs_elapsed;
  j["timing"] = std::move(t);
  return j;
}

inline ReportRow row_from_json(const nlohmann::ordered_json& j) {
  ReportRow r;
  r.name = j.at("name").get<std::string>();
  const auto& c = j.at("confusion");
  r.confusion = {c.at("tp").get<std::size_t>(), c.at("tn").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                 c.at("fn").get<std::size_t>()};
  r.accuracy = j.at("accuracy").get<double>();
  r.paper_auc = json_optional(j.at("paper_auc"));
  r.roc_auc = json_optional(j.at("roc_auc"));
  r.literal_fused_objective = json_optional(j.at("literal_fused_objective"));
  const auto& t = j.at("timing");
  if (t.contains("train_ms")) r.timing.train_ms = t["train_ms"].get<double>();
  if (t.contains("evaluate_ms")) r.timing.evaluate_ms = t["evaluate_ms"].get<double>();
  r.timing.epochs_elapsed = t.at("epochs_elapsed").get<std::size_t>();
  return r;
}

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

inline std::string fixed(const std::optional<double>& v, int digits) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return left ? s + fill : fill + s;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["tool_version"] = kToolVersion;
  j["command"] = r.command;
  j["seed"] = r.seed;
  j["n_samples"] = r.n_samples;
  j["metric_notes"] = {{"accuracy", "(TP+TN)/(TP+TN+FP+FN)"},
                       {"paper_auc", "printed AUC formula TP/(TP+FP); equals precision"},
                       {"roc_auc", "Mann-Whitney probability a positive outscores a negative"}};
  j["include_timing"] = r.include_timing;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) rows.push_back(detail::row_to_json(row, r.include_timing));
  j["rows"] = std::move(rows);
  j["aggregate"] = r.aggregate ? detail::row_to_json(*r.aggregate, r.include_timing) : nlohmann::ordered_json(nullptr);
  j["config"] = r.config;
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::ordered_json& j) {
  if (j.at("schema").get<std::string>() != kReportSchema) throw data_error("report: unsupported schema");
  EvaluationReport r;
  r.command = j.at("command").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.include_timing = j.at("include_timing").get<bool>();
  for (const auto& row : j.at("rows")) r.rows.push_back(detail::row_from_json(row));
  if (!j.at("aggregate").is_null()) r.aggregate = detail::row_from_json(j["aggregate"]);
  r.config = j.at("config");
  return r;
}

/// JSON: two-space indented, fixed key order, trailing newline.
/// Table: fixed-width text with Accuracy (%), both AUC variants and timing.
inline std::string render_report(const EvaluationReport& r, ReportFormat format) {
  if (format == ReportFormat::json) return report_to_json(r).dump(2) + "\n";

  using detail::pad;
  const std::size_t name_w = 12, col_w = 14;
  std::string out;
  out += "command: " + r.command + "  seed: " + std::to_string(r.seed) +
         "  samples: " + std::to_string(r.n_samples) + "\n";
  const std::vector<std::string> heads = {"Accuracy", "paper_auc", "ROC-AUC", "Train ms", "Eval ms", "Epochs"};
  out += pad("Run", name_w, true);
  for (const auto& h : heads) out += pad(h, col_w, false);
  out += "\n" + std::string(name_w + col_w * heads.size(), '-') + "\n";
  auto line = [&](const ReportRow& row) {
    out += pad(row.name, name_w, true);
    out += pad(detail::percent(row.accuracy), col_w, false);
    out += pad(detail::fixed(row.paper_auc, 4), col_w, false);
    out += pad(detail::fixed(row.roc_auc, 4), col_w, false);
    out += pad(r.include_timing ? detail::fixed(row.timing.train_ms, 1) : "-", col_w, false);
    out += pad(r.include_timing ? detail::fixed(row.timing.evaluate_ms, 1) : "-", col_w, false);
    out += pad(std::to_string(row.timing.epochs_elapsed), col_w, false);
    out += "\n";
  };
  for (const auto& row : r.rows) line(row);
  if (r.aggregate) {
    out += std::string(name_w + col_w * heads.size(), '-') + "\n";
    line(*r.aggregate);
  }
  out += "paper_auc is TP/(TP+FP) (precision); ROC-AUC is the rank-based area.\n";
  return out;
}

}  // namespace t2d

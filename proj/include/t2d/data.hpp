#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "t2d/error.hpp"
#include "t2d/rng.hpp"

namespace t2d {

using Label = std::uint8_t;

/// Samples x features, row-major, with one binary label per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                std::vector<Label> labels, std::vector<std::string> column_names,
                std::string label_name = "label")
      : rows_(rows),
        cols_(cols),
        values_(std::move(values)),
        labels_(std::move(labels)),
        column_names_(std::move(column_names)),
        label_name_(std::move(label_name)) {
    if (values_.size() != rows_ * cols_)
      throw data_error("feature matrix: value count does not match shape");
    if (labels_.size() != rows_)
      throw data_error("feature matrix: label count does not match row count");
    if (column_names_.size() != cols_)
      throw data_error("feature matrix: column name count does not match width");
    for (Label y : labels_)
      if (y > 1) throw data_error("feature matrix: labels must be 0 or 1");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  double at(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<Label>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& column_names() const noexcept { return column_names_; }
  const std::string& label_name() const noexcept { return label_name_; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = at(i, j);
    return out;
  }

  std::size_t count_label(Label y) const {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), y));
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  /// Rows picked by index, in the given order.
  FeatureMatrix subset(std::span<const std::size_t> indices) const {
    std::vector<double> vals;
    vals.reserve(indices.size() * cols_);
    std::vector<Label> labs;
    labs.reserve(indices.size());
    for (std::size_t i : indices) {
      auto r = row(i);
      vals.insert(vals.end(), r.begin(), r.end());
      labs.push_back(labels_[i]);
    }
    return {indices.size(), cols_, std::move(vals), std::move(labs), column_names_, label_name_};
  }

  /// Same labels and names, new values of identical shape.
  FeatureMatrix with_values(std::vector<double> values) const {
    return {rows_, cols_, std::move(values), labels_, column_names_, label_name_};
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
  std::vector<Label> labels_;
  std::vector<std::string> column_names_;
  std::string label_name_ = "label";
};

struct ColumnSummary {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  std::size_t missing = 0;
};

struct DatasetSummary {
  std::size_t n_samples = 0;
  std::size_t n_features = 0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::vector<ColumnSummary> columns;
};

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 42;
  bool stratified = true;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct FoldAssignment {
  std::size_t k = 5;
  std::vector<std::size_t> fold_of;  // one entry per sample

  std::vector<std::size_t> test_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t f : fold_of) ++sizes[f];
    return sizes;
  }
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::optional<double> parse_real(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

inline std::string format_real(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Raw numeric table: a header (given or synthesized) plus row-major cells.
struct CsvTable {
  std::vector<std::string> names;
  std::size_t rows = 0;
  std::vector<double> cells;

  std::size_t cols() const noexcept { return names.size(); }
};

enum class HeaderMode { absent, present, detect };

/// Reads a comma-separated numeric table. Blank lines are skipped. Cell
/// positions in diagnostics are 1-based, data rows counted after the header.
inline CsvTable read_csv_table(const std::string& path, HeaderMode header) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open input file: " + path);

  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!detail::trim(line).empty()) lines.push_back(std::move(line));

  CsvTable table;
  std::size_t first_data = 0;
  if (!lines.empty()) {
    auto cells = detail::split_commas(lines.front());
    bool has_header = header == HeaderMode::present;
    if (header == HeaderMode::detect)
      has_header = std::any_of(cells.begin(), cells.end(),
                               [](std::string_view c) { return !detail::parse_real(c); });
    if (has_header) {
      for (auto c : cells) table.names.emplace_back(c);
      first_data = 1;
    } else {
      for (std::size_t j = 0; j < cells.size(); ++j) table.names.push_back("col_" + std::to_string(j));
    }
  }

  const std::size_t width = table.names.size();
  for (std::size_t li = first_data; li < lines.size(); ++li) {
    const std::size_t data_row = li - first_data + 1;
    auto cells = detail::split_commas(lines[li]);
    if (cells.size() != width)
      throw data_error(path + ": ragged row " + std::to_string(data_row) + " has " +
                       std::to_string(cells.size()) + " columns, expected " + std::to_string(width));
    for (std::size_t j = 0; j < width; ++j) {
      auto v = detail::parse_real(cells[j]);
      if (!v)
        throw data_error(path + ": non-numeric cell '" + std::string(cells[j]) + "' at (" +
                         std::to_string(data_row) + "," + std::to_string(j + 1) + ")");
      table.cells.push_back(*v);
    }
    ++table.rows;
  }
  return table;
}

/// Turns a table into features (all but the last column) and labels.
inline FeatureMatrix table_to_matrix(const CsvTable& table, const std::string& origin) {
  if (table.cols() < 2) throw data_error(origin + ": need at least 2 columns");
  const std::size_t width = table.cols();
  const std::size_t nf = width - 1;
  std::vector<double> values;
  values.reserve(table.rows * nf);
  std::vector<Label> labels;
  labels.reserve(table.rows);
  for (std::size_t i = 0; i < table.rows; ++i) {
    const double* r = table.cells.data() + i * width;
    values.insert(values.end(), r, r + nf);
    const double y = r[nf];
    if (y != 0.0 && y != 1.0)
      throw data_error(origin + ": label " + detail::format_real(y) + " at row " +
                       std::to_string(i + 1) + " is not 0 or 1");
    labels.push_back(static_cast<Label>(y));
  }
  std::vector<std::string> names(table.names.begin(), table.names.end() - 1);
  return {table.rows, nf, std::move(values), std::move(labels), std::move(names), table.names.back()};
}

inline FeatureMatrix load_csv(const std::string& path, HeaderMode header) {
  const CsvTable table = read_csv_table(path, header);
  if (table.rows == 0) throw data_error(path + ": empty dataset");
  return table_to_matrix(table, path);
}

inline FeatureMatrix load_csv(const std::string& path, bool has_header) {
  return load_csv(path, has_header ? HeaderMode::present : HeaderMode::absent);
}

/// Writes features then label; reals use shortest round-trip formatting.
inline void write_csv(const FeatureMatrix& m, std::ostream& out) {
  for (const auto& name : m.column_names()) out << name << ',';
  out << m.label_name() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (double v : m.row(i)) out << detail::format_real(v) << ',';
    out << static_cast<int>(m.labels()[i]) << '\n';
  }
}

inline void write_csv(const FeatureMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write output file: " + path);
  write_csv(m, out);
  if (!out) throw data_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Column selection

/// Resolves selectors to column indices. A selector matching a column name
/// wins; otherwise a non-negative integer selector is taken as an index.
inline std::vector<std::size_t> resolve_columns(const std::vector<std::string>& names,
                                                const std::vector<std::string>& selectors) {
  std::vector<std::size_t> out;
  for (const auto& sel : selectors) {
    auto it = std::find(names.begin(), names.end(), sel);
    if (it != names.end()) {
      out.push_back(static_cast<std::size_t>(it - names.begin()));
      continue;
    }
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(sel.data(), sel.data() + sel.size(), idx);
    if (ec == std::errc() && ptr == sel.data() + sel.size() && idx < names.size()) {
      out.push_back(idx);
      continue;
    }
    throw data_error("unknown column: " + sel);
  }
  return out;
}

inline FeatureMatrix select_columns(const FeatureMatrix& m, std::span<const std::size_t> cols) {
  if (cols.empty()) throw data_error("column selection is empty");
  std::vector<double> vals;
  vals.reserve(m.rows() * cols.size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j : cols) {
      if (j >= m.cols()) throw data_error("column index out of range: " + std::to_string(j));
      vals.push_back(m.at(i, j));
    }
  std::vector<std::string> names;
  for (std::size_t j : cols) names.push_back(m.column_names()[j]);
  return {m.rows(), cols.size(), std::move(vals), m.labels(), std::move(names), m.label_name()};
}

/// Pima columns whose zeros are physiologically impossible.
inline const std::vector<std::string>& pima_zero_as_missing_names() {
  static const std::vector<std::string> names = {"Glucose", "BloodPressure", "SkinThickness",
                                                 "Insulin", "BMI"};
  return names;
}

/// Default zero-as-missing columns: the Pima names present in the header, or
/// columns 1..5 for a headerless 8-feature file laid out like Pima.
inline std::vector<std::size_t> default_zero_as_missing(const FeatureMatrix& m) {
  std::vector<std::size_t> out;
  for (const auto& name : pima_zero_as_missing_names()) {
    auto it = std::find(m.column_names().begin(), m.column_names().end(), name);
    if (it != m.column_names().end())
      out.push_back(static_cast<std::size_t>(it - m.column_names().begin()));
  }
  if (out.empty() && m.cols() == 8 && m.column_names().front() == "col_0") out = {1, 2, 3, 4, 5};
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Summary

inline DatasetSummary summarize(const FeatureMatrix& m,
                                std::span<const std::size_t> zero_as_missing = {}) {
  if (m.empty()) throw data_error("summarize: empty dataset");
  DatasetSummary s;
  s.n_samples = m.rows();
  s.n_features = m.cols();
  s.n_positive = m.count_label(1);
  s.n_negative = m.rows() - s.n_positive;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    const bool flagged = std::find(zero_as_missing.begin(), zero_as_missing.end(), j) !=
                         zero_as_missing.end();
    ColumnSummary c;
    c.name = m.column_names()[j];
    c.min = std::numeric_limits<double>::infinity();
    c.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double v = m.at(i, j);
      c.min = std::min(c.min, v);
      c.max = std::max(c.max, v);
      sum += v;
      if (flagged && v == 0.0) ++c.missing;
    }
    c.mean = sum / static_cast<double>(m.rows());
    s.columns.push_back(std::move(c));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Imputation and standardization. Both are split into fit/apply so statistics
// learned on a training split can be replayed on held-out rows.

struct ImputeStats {
  std::vector<std::size_t> columns;
  std::vector<double> medians;

  friend bool operator==(const ImputeStats&, const ImputeStats&) = default;
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ImputeStats fit_imputer(const FeatureMatrix& m, std::span<const std::size_t> columns) {
  ImputeStats stats;
  for (std::size_t j : columns) {
    if (j >= m.cols()) throw data_error("impute: column index out of range: " + std::to_string(j));
    std::vector<double> nonzero;
    for (std::size_t i = 0; i < m.rows(); ++i)
      if (m.at(i, j) != 0.0) nonzero.push_back(m.at(i, j));
    if (nonzero.empty())
      throw data_error("impute: column '" + m.column_names()[j] + "' has no non-zero entries");
    stats.columns.push_back(j);
    stats.medians.push_back(median_of(std::move(nonzero)));
  }
  return stats;
}

inline FeatureMatrix apply_imputer(const ImputeStats& stats, const FeatureMatrix& m) {
  std::vector<double> vals = m.values();
  for (std::size_t k = 0; k < stats.columns.size(); ++k) {
    const std::size_t j = stats.columns[k];
    if (j >= m.cols()) throw data_error("impute: column index out of range: " + std::to_string(j));
    for (std::size_t i = 0; i < m.rows(); ++i)
      if (vals[i * m.cols() + j] == 0.0) vals[i * m.cols() + j] = stats.medians[k];
  }
  return m.with_values(std::move(vals));
}

/// Replaces zeros in the listed columns by the median of the non-zero entries.
inline FeatureMatrix impute_missing(const FeatureMatrix& m, std::span<const std::size_t> columns) {
  return apply_imputer(fit_imputer(m, columns), m);
}

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;

  void apply_row(std::span<const double> in, std::span<double> out) const {
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
  }
};

/// Population mean and standard deviation per column. A constant column gets
/// its value as mean and scale 1, so it maps to exact zeros.
inline Standardizer fit_standardizer(const FeatureMatrix& m) {
  if (m.empty()) throw data_error("standardize: empty dataset");
  const double n = static_cast<double>(m.rows());
  Standardizer s;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double lo = m.at(0, j), hi = m.at(0, j), sum = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      lo = std::min(lo, m.at(i, j));
      hi = std::max(hi, m.at(i, j));
      sum += m.at(i, j);
    }
    if (lo == hi) {
      s.mean.push_back(lo);
      s.scale.push_back(1.0);
      continue;
    }
    const double mu = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) ss += (m.at(i, j) - mu) * (m.at(i, j) - mu);
    const double sd = std::sqrt(ss / n);
    s.mean.push_back(mu);
    s.scale.push_back(sd > 0.0 ? sd : 1.0);
  }
  return s;
}

inline FeatureMatrix apply_standardizer(const Standardizer& s, const FeatureMatrix& m) {
  if (s.mean.size() != m.cols()) throw data_error("standardize: width mismatch");
  std::vector<double> vals(m.values().size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    s.apply_row(m.row(i), std::span<double>(vals.data() + i * m.cols(), m.cols()));
  return m.with_values(std::move(vals));
}

inline std::pair<FeatureMatrix, Standardizer> standardize(const FeatureMatrix& m) {
  Standardizer s = fit_standardizer(m);
  FeatureMatrix out = apply_standardizer(s, m);
  return {std::move(out), std::move(s)};
}

// ---------------------------------------------------------------------------
// Splits and folds. Per-class index lists are shuffled with Rng(seed), class 0
// first, then class 1.

namespace detail {

inline std::vector<std::vector<std::size_t>> shuffled_classes(const FeatureMatrix& m, Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < m.rows(); ++i) by_class[m.labels()[i]].push_back(i);
  for (auto& idx : by_class) rng.shuffle(std::span<std::size_t>(idx));
  return by_class;
}

}  // namespace detail

inline SplitIndices stratified_split_indices(const FeatureMatrix& m, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw usage_error("train_fraction must lie strictly between 0 and 1");
  Rng rng(spec.seed);
  SplitIndices out;
  if (spec.stratified) {
    auto by_class = detail::shuffled_classes(m, rng);
    for (std::size_t c = 0; c < 2; ++c) {
      const auto& idx = by_class[c];
      if (idx.size() < 2)
        throw data_error("stratified split: class " + std::to_string(c) + " has fewer than 2 members");
      auto n_train = static_cast<std::size_t>(
          std::lround(spec.train_fraction * static_cast<double>(idx.size())));
      n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
      out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
      out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
  } else {
    if (m.rows() < 2) throw data_error("split: need at least 2 samples");
    std::vector<std::size_t> idx(m.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(std::span<std::size_t>(idx));
    auto n_train = static_cast<std::size_t>(
        std::lround(spec.train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline std::pair<FeatureMatrix, FeatureMatrix> stratified_split(const FeatureMatrix& m,
                                                                const SplitSpec& spec) {
  const SplitIndices idx = stratified_split_indices(m, spec);
  return {m.subset(idx.train), m.subset(idx.test)};
}

/// Stratified k-fold assignment. Within each shuffled class list, position p
/// goes to fold (offset + p) mod k, where offset carries over from the
/// previous class so overall fold sizes also differ by at most one.
inline FoldAssignment make_folds(const FeatureMatrix& m, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw usage_error("fold count must be at least 2");
  const std::size_t minority = std::min(m.count_label(0), m.count_label(1));
  if (k > minority)
    throw data_error("fold count " + std::to_string(k) + " exceeds minority class size " +
                     std::to_string(minority));
  Rng rng(seed);
  auto by_class = detail::shuffled_classes(m, rng);
  FoldAssignment fa;
  fa.k = k;
  fa.fold_of.assign(m.rows(), 0);
  std::size_t offset = 0;
  for (const auto& idx : by_class) {
    for (std::size_t p = 0; p < idx.size(); ++p) fa.fold_of[idx[p]] = (offset + p) % k;
    offset = (offset + idx.size()) % k;
  }
  return fa;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Two unit-variance Gaussian clouds whose means sit `separation` apart along
/// the all-ones diagonal. Labels are shuffled, then rows drawn in order.
inline FeatureMatrix synth_dataset(std::size_t n, std::size_t n_features, double positive_fraction,
                                   double separation, std::uint64_t seed) {
  if (n < 4) throw usage_error("synth: n must be at least 4");
  if (n_features < 1) throw usage_error("synth: need at least one feature");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0))
    throw usage_error("synth: positive_fraction must lie strictly between 0 and 1");
  if (!std::isfinite(separation) || separation < 0.0)
    throw usage_error("synth: separation must be a non-negative finite number");

  Rng rng(seed);
  auto n_pos = static_cast<std::size_t>(std::lround(positive_fraction * static_cast<double>(n)));
  n_pos = std::clamp<std::size_t>(n_pos, 1, n - 1);
  std::vector<Label> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), Label{1});
  rng.shuffle(std::span<Label>(labels));

  const double offset = 0.5 * separation / std::sqrt(static_cast<double>(n_features));
  std::vector<double> values;
  values.reserve(n * n_features);
  for (std::size_t i = 0; i < n; ++i) {
    const double centre = labels[i] == 1 ? offset : -offset;
    for (std::size_t j = 0; j < n_features; ++j) values.push_back(centre + rng.normal());
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < n_features; ++j) names.push_back("x" + std::to_string(j));
  return {n, n_features, std::move(values), std::move(labels), std::move(names), "label"};
}

}  // namespace t2d

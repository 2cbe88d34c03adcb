#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "t2d/data.hpp"
#include "t2d/error.hpp"

namespace t2d {

enum class KernelKind { linear, rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double sigma = 1.0;  // RBF width; unused for linear

  static KernelSpec linear() { return {KernelKind::linear, 1.0}; }
  static KernelSpec rbf(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw usage_error("rbf sigma must be positive");
    return {KernelKind::rbf, sigma};
  }
  /// sigma = sqrt(d/2), i.e. exp(-|s - s1|^2 / d) on standardized features.
  static KernelSpec rbf_default(std::size_t n_features) {
    return rbf(std::sqrt(static_cast<double>(n_features) / 2.0));
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline std::string to_string(KernelKind k) { return k == KernelKind::rbf ? "rbf" : "linear"; }

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "rbf") return KernelKind::rbf;
  if (s == "linear") return KernelKind::linear;
  throw usage_error("unknown kernel kind: " + s);
}

inline void check_same_width(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw data_error("kernel: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  check_same_width(a, b);
  double d2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    d2 += d * d;
  }
  return d2;
}

inline double rbf_kernel(std::span<const double> s, std::span<const double> s1, double sigma) {
  if (!(sigma > 0.0)) throw usage_error("rbf sigma must be positive");
  return std::exp(-squared_distance(s, s1) / (2.0 * sigma * sigma));
}

inline double linear_kernel(std::span<const double> s, std::span<const double> s1) {
  check_same_width(s, s1);
  double dot = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) dot += s[k] * s1[k];
  return dot;
}

inline double evaluate_kernel(const KernelSpec& spec, std::span<const double> a,
                              std::span<const double> b) {
  return spec.kind == KernelKind::rbf ? rbf_kernel(a, b, spec.sigma) : linear_kernel(a, b);
}

/// Dense symmetric n x n kernel matrix, row-major.
class GramMatrix {
 public:
  GramMatrix() = default;
  explicit GramMatrix(std::size_t n) : n_(n), entries_(n * n, 0.0) {}

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return entries_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {entries_.data() + i * n_, n_}; }

 private:
  std::size_t n_ = 0;
  std::vector<double> entries_;
};

/// Upper triangle is evaluated once and mirrored, so the result is bit-symmetric.
inline GramMatrix gram_matrix(const FeatureMatrix& rows, const KernelSpec& spec) {
  if (rows.empty()) throw data_error("gram_matrix: no rows");
  const std::size_t n = rows.rows();
  GramMatrix g(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = evaluate_kernel(spec, rows.row(i), rows.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

}  // namespace t2d

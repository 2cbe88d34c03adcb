#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "t2d/data.hpp"
#include "t2d/error.hpp"
#include "t2d/kernel.hpp"

namespace t2d {

struct SvmTrainConfig {
  double C = 1.0;
  double tolerance = 1e-3;
  // Iteration cap; when unset the trainers use 100 * n.
  std::optional<std::size_t> max_passes;
  double l1_lambda = 0.0;
  bool class_balance = false;

  static SvmTrainConfig baseline_defaults() {
    SvmTrainConfig cfg;
    cfg.class_balance = true;
    return cfg;
  }

  void validate() const {
    if (!(C > 0.0) || !std::isfinite(C)) throw usage_error("svm: C must be positive");
    if (!(tolerance > 0.0)) throw usage_error("svm: tolerance must be positive");
    if (max_passes && *max_passes < 1) throw usage_error("svm: max_passes must be at least 1");
    if (!(l1_lambda >= 0.0)) throw usage_error("svm: l1_lambda must be non-negative");
  }
};

/// Trained kernel machine. Either dual form (coefficients over support rows)
/// or, for the linear baseline, primal weights.
struct SvmModel {
  std::vector<double> support_coefficients;  // alpha_i * y_i
  double bias = 0.0;
  KernelSpec kernel;
  double box_constraint = 1.0;
  std::size_t width = 0;
  std::vector<double> support_rows;  // row-major, support_coefficients.size() x width
  std::optional<std::vector<double>> primal_weights;

  std::size_t support_count() const noexcept { return support_coefficients.size(); }
  std::span<const double> support_row(std::size_t i) const {
    return {support_rows.data() + i * width, width};
  }

  friend bool operator==(const SvmModel&, const SvmModel&) = default;
};

struct TrainingDiagnostics {
  std::vector<double> slacks;
  double objective_value = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
  // Baseline only: best objective so far at evenly spaced checkpoints.
  std::vector<double> objective_trace;
};

struct SvmFit {
  SvmModel model;
  TrainingDiagnostics diagnostics;
};

inline double decision_value(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.width)
    throw data_error("svm: input has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(model.width));
  if (model.primal_weights) return linear_kernel(*model.primal_weights, x) + model.bias;
  double f = model.bias;
  for (std::size_t i = 0; i < model.support_count(); ++i)
    f += model.support_coefficients[i] * evaluate_kernel(model.kernel, model.support_row(i), x);
  return f;
}

/// Ties (exactly zero) go to the negative class.
inline Label predict_label(const SvmModel& model, std::span<const double> x) {
  return decision_value(model, x) > 0.0 ? Label{1} : Label{0};
}

namespace detail {

inline std::vector<double> signed_labels(const FeatureMatrix& m) {
  std::vector<double> y(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) y[i] = m.labels()[i] == 1 ? 1.0 : -1.0;
  return y;
}

inline void check_trainable(const FeatureMatrix& m, const char* who) {
  if (m.count_label(0) == 0 || m.count_label(1) == 0)
    throw data_error(std::string(who) + ": training data must contain both classes");
  if (!m.all_finite()) throw numeric_error(std::string(who) + ": non-finite feature value");
}

/// Per-sample hinge weights: n / (2 n_class) when balancing, else 1.
inline std::vector<double> class_weights(const FeatureMatrix& m, bool balance) {
  std::vector<double> w(m.rows(), 1.0);
  if (!balance) return w;
  const double n = static_cast<double>(m.rows());
  const double per_class[2] = {n / (2.0 * static_cast<double>(m.count_label(0))),
                               n / (2.0 * static_cast<double>(m.count_label(1)))};
  for (std::size_t i = 0; i < m.rows(); ++i) w[i] = per_class[m.labels()[i]];
  return w;
}

inline std::vector<double> slacks_of(const SvmModel& model, const FeatureMatrix& m) {
  std::vector<double> xi(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double y = m.labels()[i] == 1 ? 1.0 : -1.0;
    xi[i] = std::max(0.0, 1.0 - y * decision_value(model, m.row(i)));
  }
  return xi;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sparse-balanced linear baseline

/// Minimizes 1/2 |w|^2 + C sum_i c_i hinge_i + lambda |w|_1 with full-batch
/// proximal subgradient steps on the objective scaled by 1/(C n). The step is
/// 1/(mu t) with mu = 1/(C n), the strong-convexity modulus of the scaled
/// objective; the L1 term is applied by soft thresholding. The best iterate
/// seen is returned.
inline SvmFit train_sb_svm(const FeatureMatrix& train, const SvmTrainConfig& cfg) {
  cfg.validate();
  detail::check_trainable(train, "train_sb_svm");
  const std::size_t n = train.rows();
  const std::size_t d = train.cols();
  const std::vector<double> y = detail::signed_labels(train);
  const std::vector<double> cw = detail::class_weights(train, cfg.class_balance);
  const double nn = static_cast<double>(n);
  const double mu = 1.0 / (cfg.C * nn);
  const std::size_t iterations = cfg.max_passes.value_or(100 * n);

  auto objective = [&](const std::vector<double>& w, double b) {
    double reg = 0.0, l1 = 0.0;
    for (double v : w) {
      reg += v * v;
      l1 += std::abs(v);
    }
    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      hinge += cw[i] * std::max(0.0, 1.0 - y[i] * (linear_kernel(w, train.row(i)) + b));
    return 0.5 * reg + cfg.C * hinge + cfg.l1_lambda * l1;
  };

  std::vector<double> w(d, 0.0), gw(d);
  double b = 0.0;
  std::vector<double> best_w = w;
  double best_b = b;
  double best_f = objective(w, b);

  TrainingDiagnostics diag;
  const std::size_t trace_every = std::max<std::size_t>(1, iterations / 100);
  diag.objective_trace.push_back(best_f);

  for (std::size_t t = 1; t <= iterations; ++t) {
    for (std::size_t k = 0; k < d; ++k) gw[k] = mu * w[k];
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = train.row(i);
      if (y[i] * (linear_kernel(w, x) + b) < 1.0) {
        const double s = cw[i] * y[i] / nn;
        for (std::size_t k = 0; k < d; ++k) gw[k] -= s * x[k];
        gb -= s;
      }
    }
    const double eta = 1.0 / (mu * static_cast<double>(t));
    const double thr = eta * cfg.l1_lambda / (cfg.C * nn);
    for (std::size_t k = 0; k < d; ++k) {
      const double v = w[k] - eta * gw[k];
      w[k] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
    }
    b -= eta * gb;
    const double f = objective(w, b);
    if (f < best_f) {
      best_f = f;
      best_w = w;
      best_b = b;
    }
    if (t % trace_every == 0 || t == iterations) diag.objective_trace.push_back(best_f);
  }

  SvmFit fit;
  fit.model.kernel = KernelSpec::linear();
  fit.model.box_constraint = cfg.C;
  fit.model.width = d;
  fit.model.bias = best_b;
  fit.model.primal_weights = std::move(best_w);
  diag.objective_value = best_f;
  diag.iterations = iterations;
  diag.slacks = detail::slacks_of(fit.model, train);
  fit.diagnostics = std::move(diag);
  return fit;
}

// ---------------------------------------------------------------------------
// Kernel SVM by sequential minimal optimization

/// Dual state after SMO, indexed by training row. Exposed for tests.
struct DualSolution {
  std::vector<double> alpha;
  std::vector<double> upper;  // per-sample box bound
  double bias = 0.0;
  double objective = 0.0;  // sum(alpha) - 1/2 alpha' Q alpha
  std::size_t iterations = 0;
  bool converged = false;
};

/// Solves max sum(a) - 1/2 a'Qa, 0 <= a_i <= C_i, y'a = 0, Q_ij = y_i y_j K_ij.
///
/// Working pair: i maximizes -y_t grad_t over the up-set, j minimizes it over
/// the low-set (largest |E_i - E_j| among feasible pairs). Ties keep the lowest
/// index. Stops once the violation gap drops below tolerance.
inline DualSolution solve_smo(const GramMatrix& K, std::span<const double> y,
                              std::span<const double> upper, double tolerance,
                              std::size_t max_iterations) {
  const std::size_t n = y.size();
  DualSolution sol;
  sol.alpha.assign(n, 0.0);
  sol.upper.assign(upper.begin(), upper.end());
  std::vector<double> grad(n, -1.0);  // gradient of 1/2 a'Qa - sum(a)
  auto& a = sol.alpha;
  auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K(i, j); };
  auto in_up = [&](std::size_t t) { return y[t] > 0 ? a[t] < upper[t] : a[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return y[t] > 0 ? a[t] > 0.0 : a[t] < upper[t]; };
  constexpr double tau = 1e-12;

  std::size_t it = 0;
  for (; it < max_iterations; ++it) {
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && v > g_max) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && v < g_min) {
        g_min = v;
        j = t;
      }
    }
    if (i == n || j == n || g_max - g_min < tolerance) {
      sol.converged = true;
      break;
    }

    const double ai_old = a[i], aj_old = a[j];
    const double Ci = upper[i], Cj = upper[j];
    if (y[i] != y[j]) {
      double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
      if (quad <= 0.0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) {
          a[j] = 0.0;
          a[i] = diff;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = -diff;
      }
      if (diff > Ci - Cj) {
        if (a[i] > Ci) {
          a[i] = Ci;
          a[j] = Ci - diff;
        }
      } else if (a[j] > Cj) {
        a[j] = Cj;
        a[i] = Cj + diff;
      }
    } else {
      double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
      if (quad <= 0.0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > Ci) {
        if (a[i] > Ci) {
          a[i] = Ci;
          a[j] = sum - Ci;
        }
      } else if (a[j] < 0.0) {
        a[j] = 0.0;
        a[i] = sum;
      }
      if (sum > Cj) {
        if (a[j] > Cj) {
          a[j] = Cj;
          a[i] = sum - Cj;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = sum;
      }
    }

    const double dai = a[i] - ai_old, daj = a[j] - aj_old;
    for (std::size_t t = 0; t < n; ++t) grad[t] += Q(t, i) * dai + Q(t, j) * daj;
  }
  sol.iterations = it;

  // Bias from free vectors; falls back to the middle of the feasible interval.
  double free_sum = 0.0, ub = std::numeric_limits<double>::infinity(),
         lb = -std::numeric_limits<double>::infinity();
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (a[t] > 0.0 && a[t] < upper[t]) {
      free_sum += yg;
      ++n_free;
    } else if ((a[t] >= upper[t]) == (y[t] > 0)) {
      lb = std::max(lb, yg);
    } else {
      ub = std::min(ub, yg);
    }
  }
  const double rho = n_free > 0 ? free_sum / static_cast<double>(n_free) : 0.5 * (ub + lb);
  sol.bias = -rho;

  // f(a) = 1/2 a'Qa - sum(a) = 1/2 sum a_t (grad_t - 1)
  double f = 0.0;
  for (std::size_t t = 0; t < n; ++t) f += a[t] * (grad[t] - 1.0);
  sol.objective = -0.5 * f;
  return sol;
}

/// Soft-margin kernel SVM trained in the dual. The returned model keeps only
/// rows with non-zero alpha.
inline SvmFit train_kernel_svm(const FeatureMatrix& train, const SvmTrainConfig& cfg,
                               const KernelSpec& kernel) {
  cfg.validate();
  detail::check_trainable(train, "train_rbf_svm");
  const std::size_t n = train.rows();
  const std::vector<double> y = detail::signed_labels(train);
  std::vector<double> upper = detail::class_weights(train, cfg.class_balance);
  for (double& u : upper) u *= cfg.C;

  const GramMatrix K = gram_matrix(train, kernel);
  const DualSolution sol =
      solve_smo(K, y, upper, cfg.tolerance, cfg.max_passes.value_or(100 * n));

  SvmFit fit;
  SvmModel& m = fit.model;
  m.kernel = kernel;
  m.box_constraint = cfg.C;
  m.width = train.cols();
  m.bias = sol.bias;
  for (std::size_t i = 0; i < n; ++i) {
    if (sol.alpha[i] == 0.0) continue;
    m.support_coefficients.push_back(sol.alpha[i] * y[i]);
    auto r = train.row(i);
    m.support_rows.insert(m.support_rows.end(), r.begin(), r.end());
  }
  fit.diagnostics.objective_value = sol.objective;
  fit.diagnostics.iterations = sol.iterations;
  fit.diagnostics.converged = sol.converged;
  fit.diagnostics.slacks = detail::slacks_of(m, train);
  return fit;
}

inline SvmFit train_rbf_svm(const FeatureMatrix& train, const SvmTrainConfig& cfg,
                            const KernelSpec& kernel) {
  if (kernel.kind != KernelKind::rbf) throw usage_error("train_rbf_svm: kernel must be rbf");
  return train_kernel_svm(train, cfg, kernel);
}

/// The objective exactly as printed for the modified machine: 1/2 |w|^2 in the
/// kernel feature space plus C times the kernel summed over consecutive
/// training-row pairs (s_i, s_{i+1}), cyclically. Reported, never optimized.
inline double literal_modified_objective(const SvmModel& model, const FeatureMatrix& train) {
  double w2 = 0.0;
  for (std::size_t i = 0; i < model.support_count(); ++i)
    for (std::size_t j = 0; j < model.support_count(); ++j)
      w2 += model.support_coefficients[i] * model.support_coefficients[j] *
            evaluate_kernel(model.kernel, model.support_row(i), model.support_row(j));
  double ksum = 0.0;
  for (std::size_t i = 0; i < train.rows(); ++i)
    ksum += evaluate_kernel(model.kernel, train.row(i), train.row((i + 1) % train.rows()));
  return 0.5 * w2 + model.box_constraint * ksum;
}

}  // namespace t2d

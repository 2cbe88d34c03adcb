#pragma once

// Brute-force solver for tiny soft-margin SVM duals, used only as a test
// oracle. Every assignment of each multiplier to {0, C, free} is tried; for
// each, the equality-constrained stationarity system on the free set is solved
// directly and the result kept if it lies in the box. With a positive-definite
// Q (RBF kernel, distinct points) the best feasible candidate is the global
// optimum. Cost is 3^n linear solves, fine for n <= 8.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace t2d::testing {

struct OracleSolution {
  std::vector<double> alpha;
  double objective = -std::numeric_limits<double>::infinity();  // sum(a) - 1/2 a'Qa
  double bias = 0.0;
};

inline OracleSolution brute_force_dual(const Eigen::MatrixXd& K, const std::vector<double>& y, double C) {
  const int n = static_cast<int>(y.size());
  Eigen::MatrixXd Q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Q(i, j) = y[i] * y[j] * K(i, j);

  OracleSolution best;
  int patterns = 1;
  for (int i = 0; i < n; ++i) patterns *= 3;
  for (int p = 0; p < patterns; ++p) {
    std::vector<int> state(n);  // 0 lower, 1 upper, 2 free
    for (int i = 0, code = p; i < n; ++i, code /= 3) state[i] = code % 3;
    std::vector<int> free;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (state[i] == 1) a(i) = C;
      if (state[i] == 2) free.push_back(i);
    }
    const int m = static_cast<int>(free.size());
    double yb = 0.0;
    for (int i = 0; i < n; ++i)
      if (state[i] != 2) yb += y[i] * a(i);
    if (m == 0) {
      if (std::abs(yb) > 1e-12) continue;
    } else {
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
      Eigen::VectorXd rhs(m + 1);
      for (int r = 0; r < m; ++r) {
        const int i = free[r];
        double qb = 0.0;
        for (int k = 0; k < n; ++k)
          if (state[k] != 2) qb += Q(i, k) * a(k);
        for (int c = 0; c < m; ++c) A(r, c) = Q(i, free[c]);
        A(r, m) = y[i];
        A(m, r) = y[i];
        rhs(r) = 1.0 - qb;
      }
      rhs(m) = -yb;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd sol = lu.solve(rhs);
      bool feasible = true;
      for (int r = 0; r < m; ++r) {
        if (sol(r) < -1e-12 || sol(r) > C + 1e-12) feasible = false;
        a(free[r]) = std::clamp(sol(r), 0.0, C);
      }
      if (!feasible) continue;
    }
    const double obj = a.sum() - 0.5 * a.dot(Q * a);
    if (obj > best.objective) {
      best.objective = obj;
      best.alpha.assign(a.data(), a.data() + n);
    }
  }

  // Bias: average over free multipliers, else the middle of the KKT interval.
  const Eigen::Map<const Eigen::VectorXd> alpha(best.alpha.data(), n);
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  int n_free = 0;
  for (int i = 0; i < n; ++i) {
    double g = 0.0;  // sum_j a_j y_j K_ij
    for (int j = 0; j < n; ++j) g += alpha(j) * y[j] * K(i, j);
    const double target = y[i] - g;  // b making y_i f(x_i) = 1
    const double a = alpha(i);
    if (a > 1e-9 && a < C - 1e-9) {
      sum += target;
      ++n_free;
    } else if ((a <= 1e-9) == (y[i] > 0)) {
      lo = std::max(lo, target);  // need y f >= 1 with y = +1, or y f <= 1 with y = -1
    } else {
      hi = std::min(hi, target);
    }
  }
  best.bias = n_free > 0 ? sum / n_free : 0.5 * (lo + hi);
  return best;
}

}  // namespace t2d::testing

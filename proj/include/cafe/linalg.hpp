#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cafe/error.hpp"

namespace cafe {

/// Dense row-major matrix. Small and unclever on purpose; every design matrix
/// in this toolkit has a handful of columns.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {a.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {a.data() + i * cols, cols}; }
};

namespace linalg {

/// In-place Cholesky solve of the SPD system A x = b. Returns false when a
/// pivot collapses (rank-deficient or indefinite A).
inline bool solve_spd(std::vector<double> A, std::vector<double> b, std::size_t n,
                      std::vector<double>& out) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = A[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
    if (!(d > 1e-12 * (1.0 + std::fabs(A[j * n + j])))) return false;
    const double l = std::sqrt(d);
    A[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = A[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
      A[i * n + j] = s / l;
    }
  }
  // forward then backward substitution
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= A[i * n + k] * b[k];
    b[i] = s / A[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= A[k * n + ii] * b[k];
    b[ii] = s / A[ii * n + ii];
  }
  out = std::move(b);
  return true;
}

struct FitResult {
  std::vector<double> coef;          // one per design column
  bool ridge_fallback = false;       // true when the plain solve was rank-deficient
};

/// Least squares of y on X via normal equations. A singular design falls back
/// to ridge with the given penalty and flags the result.
inline FitResult ols(const Matrix& X, std::span<const double> y, double ridge = 1e-6) {
  const std::size_t n = X.rows, p = X.cols;
  require(y.size() == n, "shape-mismatch", "ols: len(y) != rows(X)");
  std::vector<double> XtX(p * p, 0.0), Xty(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = X.row(i);
    for (std::size_t j = 0; j < p; ++j) {
      Xty[j] += r[j] * y[i];
      for (std::size_t k = j; k < p; ++k) XtX[j * p + k] += r[j] * r[k];
    }
  }
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k < j; ++k) XtX[j * p + k] = XtX[k * p + j];

  FitResult fit;
  if (solve_spd(XtX, Xty, p, fit.coef)) return fit;
  for (std::size_t j = 0; j < p; ++j) XtX[j * p + j] += ridge;
  require(solve_spd(XtX, Xty, p, fit.coef), "rank-deficient",
          "ols: design singular even under ridge");
  fit.ridge_fallback = true;
  return fit;
}

/// Binary logistic regression by iteratively reweighted least squares.
/// Labels must be 0/1. Stops at `max_iter` or when the coefficient step drops
/// below `tol`; separable data simply exhausts the iteration budget.
inline FitResult logistic_irls(const Matrix& X, std::span<const double> y, int max_iter = 100,
                               double tol = 1e-8, double ridge = 1e-6) {
  const std::size_t n = X.rows, p = X.cols;
  require(y.size() == n, "shape-mismatch", "logistic: len(y) != rows(X)");
  FitResult fit;
  fit.coef.assign(p, 0.0);
  std::vector<double> XtWX(p * p), Xtz(p), step;
  for (int it = 0; it < max_iter; ++it) {
    std::fill(XtWX.begin(), XtWX.end(), 0.0);
    std::fill(Xtz.begin(), Xtz.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = X.row(i);
      double eta = 0.0;
      for (std::size_t j = 0; j < p; ++j) eta += r[j] * fit.coef[j];
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      const double w = std::max(mu * (1.0 - mu), 1e-10);
      const double g = y[i] - mu;
      for (std::size_t j = 0; j < p; ++j) {
        Xtz[j] += r[j] * g;
        for (std::size_t k = j; k < p; ++k) XtWX[j * p + k] += w * r[j] * r[k];
      }
    }
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < j; ++k) XtWX[j * p + k] = XtWX[k * p + j];
      XtWX[j * p + j] += ridge;  // keeps separable fits bounded
    }
    if (!solve_spd(XtWX, Xtz, p, step)) {
      fit.ridge_fallback = true;
      break;
    }
    double delta = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      fit.coef[j] += step[j];
      delta = std::max(delta, std::fabs(step[j]));
    }
    if (delta < tol) break;
  }
  return fit;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace linalg
}  // namespace cafe

#pragma once

// Deterministic solver for class-weighted, L2-regularized logistic regression:
//
//   f(w, b) = sum_i s_i * [softplus(z_i) - y_i z_i] + ||w||^2 / (2C),   z = Xw + b
//
// Full-batch gradient descent. Trial steps come from the Barzilai-Borwein
// rule and are accepted only under the Armijo condition, so f decreases
// monotonically. The intercept is not penalized.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "attriprobe/error.hpp"
#include "attriprobe/probes.hpp"

namespace attriprobe {

/// Dense row-major design matrix.
struct DenseDesign {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;

  std::size_t rows() const { return n_rows; }
  std::size_t cols() const { return n_cols; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * n_cols, n_cols}; }

  void multiply(std::span<const double> w, double b, std::span<double> z) const {
    for (std::size_t i = 0; i < n_rows; ++i) {
      double s = b;
      const double* r = data.data() + i * n_cols;
      for (std::size_t j = 0; j < n_cols; ++j) s += r[j] * w[j];
      z[i] = s;
    }
  }

  void multiply_transpose(std::span<const double> r, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (r[i] == 0.0) continue;
      const double* x = data.data() + i * n_cols;
      for (std::size_t j = 0; j < n_cols; ++j) out[j] += r[i] * x[j];
    }
  }
};

struct SparseRow {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  double dot(std::span<const double> w) const {
    double s = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k) s += value[k] * w[index[k]];
    return s;
  }
};

/// Row-compressed sparse design matrix.
struct SparseDesign {
  std::size_t n_cols = 0;
  std::vector<SparseRow> row_data;

  std::size_t rows() const { return row_data.size(); }
  std::size_t cols() const { return n_cols; }

  void multiply(std::span<const double> w, double b, std::span<double> z) const {
    for (std::size_t i = 0; i < row_data.size(); ++i) z[i] = b + row_data[i].dot(w);
  }

  void multiply_transpose(std::span<const double> r, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < row_data.size(); ++i) {
      const auto& row = row_data[i];
      for (std::size_t k = 0; k < row.index.size(); ++k) out[row.index[k]] += r[i] * row.value[k];
    }
  }
};

struct LogisticOptions {
  double C = 1.0;
  std::size_t max_iter = 1000;
  double tol = 1e-6;  // on the infinity norm of the gradient
};

struct LogisticFit {
  std::vector<double> w;
  double b = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double grad_inf_norm = 0.0;
  std::vector<double> objective_history;  // f at the start and after every accepted step
};

/// Balanced weights N / (2 N_c) for labels in {0, 1}.
inline std::pair<double, double> balanced_class_weights(std::span<const int> labels) {
  const auto stats = class_stats(labels);
  const double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(stats.count_neg)), n / (2.0 * static_cast<double>(stats.count_pos))};
}

namespace detail {

template <typename Design>
double logistic_value_grad(const Design& X, std::span<const int> y, std::span<const double> s, double C,
                           std::span<const double> wb, std::span<double> grad, std::vector<double>& scratch) {
  const std::size_t d = X.cols();
  const std::span<const double> w = wb.first(d);
  scratch.resize(X.rows());
  X.multiply(w, wb[d], scratch);
  double f = 0.0, gb = 0.0;
  for (std::size_t i = 0; i < scratch.size(); ++i) {
    const double z = scratch[i];
    f += s[i] * (softplus(z) - (y[i] == kParametric ? z : 0.0));
    scratch[i] = s[i] * (sigmoid(z) - (y[i] == kParametric ? 1.0 : 0.0));
    gb += scratch[i];
  }
  double reg = 0.0;
  for (double v : w) reg += v * v;
  f += reg / (2.0 * C);
  if (!grad.empty()) {
    X.multiply_transpose(scratch, grad.first(d));
    for (std::size_t j = 0; j < d; ++j) grad[j] += w[j] / C;
    grad[d] = gb;
  }
  return f;
}

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail

/// Objective value and gradient (w..., b) at a given point.
template <typename Design>
std::pair<double, std::vector<double>> logistic_objective(const Design& X, std::span<const int> y,
                                                          std::span<const double> sample_weight, double C,
                                                          std::span<const double> w, double b) {
  std::vector<double> wb(w.begin(), w.end());
  wb.push_back(b);
  std::vector<double> grad(wb.size()), scratch;
  const double f = detail::logistic_value_grad(X, y, sample_weight, C, wb, grad, scratch);
  return {f, grad};
}

template <typename Design>
LogisticFit fit_logistic(const Design& X, std::span<const int> y, std::span<const double> sample_weight,
                         const LogisticOptions& opt = {}) {
  if (y.size() != X.rows() || sample_weight.size() != X.rows())
    fail(ErrorKind::DimensionMismatch, "design, labels and weights disagree in length");
  const std::size_t d = X.cols();
  std::vector<double> x(d + 1, 0.0), g(d + 1), x_new(d + 1), g_new(d + 1), scratch;

  LogisticFit fit;
  double f = detail::logistic_value_grad(X, y, sample_weight, opt.C, x, g, scratch);
  fit.objective_history.push_back(f);
  double gnorm = detail::inf_norm(g);
  double step = gnorm > 0 ? 1.0 / gnorm : 1.0;

  while (gnorm >= opt.tol && fit.iterations < opt.max_iter) {
    double gg = 0.0;
    for (double v : g) gg += v * v;
    double f_new = f;
    bool accepted = false;
    for (int halvings = 0; halvings < 80; ++halvings) {
      for (std::size_t k = 0; k <= d; ++k) x_new[k] = x[k] - step * g[k];
      f_new = detail::logistic_value_grad(X, y, sample_weight, opt.C, x_new, g_new, scratch);
      if (std::isfinite(f_new) && f_new <= f - 1e-4 * step * gg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // step underflow: at numerical precision

    double sy = 0.0, yy = 0.0;
    for (std::size_t k = 0; k <= d; ++k) {
      const double sk = x_new[k] - x[k], yk = g_new[k] - g[k];
      sy += sk * yk;
      yy += yk * yk;
    }
    std::swap(x, x_new);
    std::swap(g, g_new);
    f = f_new;
    fit.objective_history.push_back(f);
    ++fit.iterations;
    gnorm = detail::inf_norm(g);
    step = (sy > 0 && yy > 0) ? std::clamp(sy / yy, 1e-12, 1e12) : step * 2.0;
  }

  fit.converged = gnorm < opt.tol;
  fit.grad_inf_norm = gnorm;
  fit.w.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
  fit.b = x[d];
  return fit;
}

}  // namespace attriprobe

#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// None of these call into the library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "attriprobe/rng.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Finite differences

inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// |a - n| / max(|a|, |n|, floor). The floor turns the check into an absolute
/// one (floor * tol) for gradients that are essentially zero.
inline double relative_error(double a, double n, double floor = 1e-3) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], n[i], floor));
  return worst;
}

// ---------------------------------------------------------------------------
// Euclidean projection onto the probability simplex

/// Solves min ||p - z||^2 s.t. p >= 0, sum p = 1 by bisection on the multiplier
/// tau of the equality constraint: p_i = max(z_i - tau, 0).
inline std::vector<double> simplex_projection(const std::vector<double>& z) {
  double lo = *std::min_element(z.begin(), z.end()) - 1.0;  // sum >= 1
  double hi = *std::max_element(z.begin(), z.end());        // sum == 0
  auto mass = [&](double tau) {
    double s = 0.0;
    for (double v : z) s += std::max(v - tau, 0.0);
    return s;
  };
  for (int it = 0; it < 300 && hi - lo > 0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  // Exact tau from the support identified by the bracket.
  double sum = 0.0;
  std::size_t k = 0;
  for (double v : z)
    if (v > hi) {
      sum += v;
      ++k;
    }
  if (k == 0) {
    sum = *std::max_element(z.begin(), z.end());
    k = 1;
  }
  const double tau = (sum - 1.0) / static_cast<double>(k);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(z[i] - tau, 0.0);
  return p;
}

/// KKT conditions of the simplex projection: primal feasibility, a common
/// multiplier tau with p_i = z_i - tau on the support and z_i <= tau off it.
inline bool simplex_kkt_holds(const std::vector<double>& z, const std::vector<double>& p, double tol = 1e-12) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0) return false;
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) return false;
  double tau = 0.0;
  bool have_tau = false;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (p[i] > 0) {
      const double t = z[i] - p[i];
      if (have_tau && std::abs(t - tau) > tol * (1 + std::abs(tau))) return false;
      tau = have_tau ? tau : t;
      have_tau = true;
    }
  if (!have_tau) return false;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (p[i] == 0 && z[i] > tau + tol * (1 + std::abs(tau))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Fisher exact test by exact integer enumeration

/// Binomial coefficients C(n, k) for n <= 66 exactly in 64 bits.
class Binomials {
 public:
  explicit Binomials(std::size_t n_max) : rows_(n_max + 1) {
    if (n_max > 66) throw std::out_of_range("Binomials: C(n, k) overflows 64 bits past n = 66");
    for (std::size_t n = 0; n <= n_max; ++n) {
      rows_[n].assign(n + 1, 1);
      for (std::size_t k = 1; k < n; ++k) rows_[n][k] = rows_[n - 1][k - 1] + rows_[n - 1][k];
    }
  }
  std::uint64_t operator()(std::size_t n, std::size_t k) const { return k > n ? 0 : rows_[n][k]; }

 private:
  std::vector<std::vector<std::uint64_t>> rows_;
};

/// Two-sided p-value: sum of hypergeometric weights not exceeding the observed
/// weight, all in exact integer arithmetic.
inline double fisher_two_sided(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d,
                               const Binomials& C) {
  const std::uint64_t r1 = a + b, r2 = c + d, c1 = a + c, n = a + b + c + d;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c1 == n) return 1.0;
  using u128 = unsigned __int128;
  auto weight = [&](std::uint64_t x) -> u128 { return static_cast<u128>(C(r1, x)) * C(r2, c1 - x); };
  const u128 observed = weight(a);
  u128 tail = 0, total = 0;
  const std::uint64_t lo = c1 > r2 ? c1 - r2 : 0, hi = std::min(r1, c1);
  for (std::uint64_t x = lo; x <= hi; ++x) {
    const u128 w = weight(x);
    total += w;
    if (w <= observed) tail += w;
  }
  return static_cast<double>(static_cast<long double>(tail) / static_cast<long double>(total));
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)

struct Eigen2 {
  std::vector<double> values;               // descending
  std::vector<std::vector<double>> vectors;  // vectors[k] pairs with values[k]
};

inline Eigen2 jacobi_eigen(std::vector<std::vector<double>> A) {
  const std::size_t n = A.size();
  std::vector<std::vector<double>> V(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) V[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += A[i][j] * A[i][j];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(A[p][q]) < 1e-300) continue;
        const double theta = (A[q][q] - A[p][p]) / (2 * A[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A[k][p], akq = A[k][q];
          A[k][p] = c * akp - s * akq;
          A[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A[p][k], aqk = A[q][k];
          A[p][k] = c * apk - s * aqk;
          A[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = V[k][p], vkq = V[k][q];
          V[k][p] = c * vkp - s * vkq;
          V[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return A[x][x] > A[y][y]; });
  Eigen2 out;
  for (auto k : order) {
    out.values.push_back(A[k][k]);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = V[i][k];
    out.vectors.push_back(std::move(v));
  }
  return out;
}

/// Covariance (1/N) of the centred rows of X.
inline std::vector<std::vector<double>> covariance(const std::vector<std::vector<double>>& X) {
  const std::size_t N = X.size(), H = X[0].size();
  std::vector<double> mean(H, 0.0);
  for (const auto& r : X)
    for (std::size_t j = 0; j < H; ++j) mean[j] += r[j] / static_cast<double>(N);
  std::vector<std::vector<double>> S(H, std::vector<double>(H, 0.0));
  for (const auto& r : X)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < H; ++j) S[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / static_cast<double>(N);
  return S;
}

/// Sign convention shared with the library: largest-magnitude entry positive.
inline void canonical_sign(std::vector<double>& v) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[k])) k = i;
  if (v[k] < 0)
    for (auto& x : v) x = -x;
}

// ---------------------------------------------------------------------------
// Classification metrics by direct counting

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts count_for(const std::vector<int>& pred, const std::vector<int>& truth, int positive) {
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == positive, t = truth[i] == positive;
    if (p && t) ++c.tp;
    if (p && !t) ++c.fp;
    if (!p && t) ++c.fn;
    if (!p && !t) ++c.tn;
  }
  return c;
}

inline double f1_of(const Counts& c) {
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * c.tp / denom;
}

inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  return 0.5 * (f1_of(count_for(pred, truth, 0)) + f1_of(count_for(pred, truth, 1)));
}

// ---------------------------------------------------------------------------
// Text fixtures

/// Filler words spelled with letters only: "wa", "wb", ...
inline std::string filler_word(std::size_t i) {
  std::string s = "w";
  do {
    s.push_back(static_cast<char>('a' + i % 26));
    i /= 26;
  } while (i > 0);
  return s;
}

struct TextExample {
  std::string passage;
  int label = 0;
};

/// Balanced corpus of filler text; optionally every label-1 passage carries `marker`.
inline std::vector<TextExample> filler_corpus(std::size_t n, std::uint64_t seed, const std::string& marker,
                                              std::size_t vocab = 300) {
  attriprobe::Rng rng(seed);
  std::vector<TextExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    TextExample e;
    e.label = static_cast<int>(i % 2);
    const std::size_t len = 15 + rng.uniform_index(20);
    for (std::size_t t = 0; t < len; ++t) {
      if (!e.passage.empty()) e.passage += ' ';
      e.passage += filler_word(rng.uniform_index(vocab));
    }
    if (!marker.empty() && e.label == 1) e.passage += " " + marker;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace oracle

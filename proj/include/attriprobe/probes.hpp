#pragma once

// Probe architectures over an L x H hidden-state stack.
//
//   FinalLR   p = sigmoid(w . standardize(h_L) + b)
//   LayerLR   alpha = softmax(theta),   hbar = sum_l alpha_l * normalize(h_l),
//             z = w . dropout(hbar) + b
//   LayerMLP  alpha = sparsemax(theta), hbar as above,
//             z = w2 . dropout(gelu(W1 hbar)) + b
//
// Gradients are analytic; softmax and sparsemax are differentiated through
// their full Jacobians.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "attriprobe/activation_store.hpp"
#include "attriprobe/error.hpp"
#include "attriprobe/rng.hpp"

namespace attriprobe {

enum class ProbeVariant : std::uint8_t { FinalLR = 0, LayerLR = 1, LayerMLP = 2 };

inline const char* to_string(ProbeVariant v) {
  switch (v) {
    case ProbeVariant::FinalLR: return "final-lr";
    case ProbeVariant::LayerLR: return "layer-lr";
    case ProbeVariant::LayerMLP: return "layer-mlp";
  }
  return "unknown";
}

inline std::optional<ProbeVariant> parse_variant(const std::string& s) {
  if (s == "final-lr") return ProbeVariant::FinalLR;
  if (s == "layer-lr") return ProbeVariant::LayerLR;
  if (s == "layer-mlp") return ProbeVariant::LayerMLP;
  return std::nullopt;
}

struct FinalLRParams {
  std::size_t layers = 0;
  std::vector<double> w;
  double b = 0.0;
  std::vector<double> scaler_mean;
  std::vector<double> scaler_std;  // strictly positive

  std::size_t hidden() const { return w.size(); }
  bool operator==(const FinalLRParams&) const = default;
};

struct LayerLRParams {
  std::vector<double> theta;
  std::vector<double> w;
  double b = 0.0;

  std::size_t layers() const { return theta.size(); }
  std::size_t hidden() const { return w.size(); }
  bool operator==(const LayerLRParams&) const = default;
};

struct LayerMLPParams {
  std::size_t m = 0;
  std::vector<double> theta;
  std::vector<double> W1;  // m x H, row-major
  std::vector<double> w2;
  double b = 0.0;

  std::size_t layers() const { return theta.size(); }
  std::size_t hidden() const { return m == 0 ? 0 : W1.size() / m; }
  bool operator==(const LayerMLPParams&) const = default;
};

using Probe = std::variant<FinalLRParams, LayerLRParams, LayerMLPParams>;

inline ProbeVariant variant_of(const Probe& p) { return static_cast<ProbeVariant>(p.index()); }

inline std::size_t probe_layers(const Probe& p) {
  return std::visit(
      [](const auto& q) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(q)>, FinalLRParams>)
          return q.layers;
        else
          return q.layers();
      },
      p);
}

inline std::size_t probe_hidden(const Probe& p) {
  return std::visit([](const auto& q) { return q.hidden(); }, p);
}

/// Inverted dropout: kept units are scaled by 1 / keep_prob.
struct DropoutMask {
  std::vector<std::uint8_t> keep;
  double keep_prob = 1.0;

  double scale(std::size_t i) const { return keep[i] ? 1.0 / keep_prob : 0.0; }

  static DropoutMask sample(std::size_t n, double p_drop, Rng& rng) {
    DropoutMask m;
    m.keep_prob = 1.0 - p_drop;
    m.keep.resize(n);
    for (auto& k : m.keep) k = rng.bernoulli(m.keep_prob) ? 1 : 0;
    return m;
  }
};

// ---------------------------------------------------------------------------
// Elementwise pieces

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double gelu(double x) { return x * normal_cdf(x); }

inline double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return normal_cdf(x) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline std::vector<double> gelu(std::span<const double> x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return gelu(v); });
  return out;
}

inline std::vector<double> softmax(std::span<const double> theta) {
  std::vector<double> out(theta.size());
  if (theta.empty()) return out;
  const double mx = *std::max_element(theta.begin(), theta.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) sum += out[i] = std::exp(theta[i] - mx);
  for (auto& v : out) v /= sum;
  return out;
}

/// Euclidean projection of `theta` onto the probability simplex.
inline std::vector<double> sparsemax(std::span<const double> theta) {
  std::vector<double> out(theta.size(), 0.0);
  if (theta.empty()) return out;
  std::vector<double> z(theta.begin(), theta.end());
  std::sort(z.begin(), z.end(), std::greater<>());
  double cumulative = 0.0, support_sum = z.front();
  std::size_t k = 1;
  for (std::size_t j = 0; j < z.size(); ++j) {
    cumulative += z[j];
    if (1.0 + static_cast<double>(j + 1) * z[j] > cumulative) {
      k = j + 1;
      support_sum = cumulative;
    }
  }
  const double tau = (support_sum - 1.0) / static_cast<double>(k);
  for (std::size_t i = 0; i < theta.size(); ++i) out[i] = std::max(theta[i] - tau, 0.0);
  return out;
}

/// Vector-Jacobian products of the two aggregation maps.
inline std::vector<double> softmax_backward(std::span<const double> alpha, std::span<const double> grad_alpha) {
  const double dot = std::inner_product(alpha.begin(), alpha.end(), grad_alpha.begin(), 0.0);
  std::vector<double> g(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) g[i] = alpha[i] * (grad_alpha[i] - dot);
  return g;
}

inline std::vector<double> sparsemax_backward(std::span<const double> alpha, std::span<const double> grad_alpha) {
  double sum = 0.0;
  std::size_t support = 0;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    if (alpha[i] > 0.0) {
      sum += grad_alpha[i];
      ++support;
    }
  const double mean = support ? sum / static_cast<double>(support) : 0.0;
  std::vector<double> g(alpha.size(), 0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i)
    if (alpha[i] > 0.0) g[i] = grad_alpha[i] - mean;
  return g;
}

// ---------------------------------------------------------------------------
// Layer normalization and aggregation

struct LayerMatrix {
  std::size_t layers = 0;
  std::size_t hidden = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t l) const { return {data.data() + l * hidden, hidden}; }
  std::span<double> row(std::size_t l) { return {data.data() + l * hidden, hidden}; }
};

/// Divides each layer row by its Euclidean norm; zero rows stay zero.
inline LayerMatrix l2_normalize_layers(const LayerTensor& t) {
  LayerMatrix out{t.layers, t.hidden, std::vector<double>(t.data.begin(), t.data.end())};
  for (std::size_t l = 0; l < t.layers; ++l) {
    auto r = out.row(l);
    double sq = 0.0;
    for (double v : r) sq += v * v;
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : r) v *= inv;
  }
  return out;
}

inline std::vector<double> blend(const LayerMatrix& normalized, std::span<const double> alpha) {
  std::vector<double> hbar(normalized.hidden, 0.0);
  for (std::size_t l = 0; l < normalized.layers; ++l) {
    const auto r = normalized.row(l);
    for (std::size_t j = 0; j < hbar.size(); ++j) hbar[j] += alpha[l] * r[j];
  }
  return hbar;
}

namespace detail {

inline void check_shape(const LayerTensor& t, std::size_t layers, std::size_t hidden) {
  if (t.layers != layers || t.hidden != hidden)
    fail(ErrorKind::DimensionMismatch, "input is " + std::to_string(t.layers) + "x" + std::to_string(t.hidden) +
                                           ", probe expects " + std::to_string(layers) + "x" +
                                           std::to_string(hidden));
}

inline void check_mask(const DropoutMask* mask, std::size_t n) {
  if (mask && mask->keep.size() != n) fail(ErrorKind::DimensionMismatch, "dropout mask length mismatch");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward passes

inline std::vector<double> standardize_last_layer(const LayerTensor& h, const FinalLRParams& p) {
  detail::check_shape(h, p.layers, p.hidden());
  const auto last = h.row(h.layers - 1);
  std::vector<double> x(p.hidden());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = (last[j] - p.scaler_mean[j]) / p.scaler_std[j];
  return x;
}

inline double final_lr_logit(const LayerTensor& h, const FinalLRParams& p) {
  const auto x = standardize_last_layer(h, p);
  return detail::dot(p.w, x) + p.b;
}

inline double forward_final_lr(const LayerTensor& h, const FinalLRParams& p) { return sigmoid(final_lr_logit(h, p)); }

inline double forward_layer_lr(const LayerTensor& h, const LayerLRParams& p, const DropoutMask* mask = nullptr) {
  detail::check_shape(h, p.layers(), p.hidden());
  detail::check_mask(mask, p.hidden());
  const auto alpha = softmax(p.theta);
  const auto hbar = blend(l2_normalize_layers(h), alpha);
  double z = p.b;
  for (std::size_t j = 0; j < hbar.size(); ++j) z += p.w[j] * hbar[j] * (mask ? mask->scale(j) : 1.0);
  return z;
}

inline double forward_layer_mlp(const LayerTensor& h, const LayerMLPParams& p, const DropoutMask* mask = nullptr) {
  detail::check_shape(h, p.layers(), p.hidden());
  detail::check_mask(mask, p.m);
  const std::size_t H = p.hidden();
  const auto alpha = sparsemax(p.theta);
  const auto hbar = blend(l2_normalize_layers(h), alpha);
  double z = p.b;
  for (std::size_t i = 0; i < p.m; ++i) {
    const double u = detail::dot({p.W1.data() + i * H, H}, hbar);
    z += p.w2[i] * gelu(u) * (mask ? mask->scale(i) : 1.0);
  }
  return z;
}

/// Logit of any probe variant, without dropout.
inline double probe_logit(const Probe& probe, const LayerTensor& h) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FinalLRParams>)
          return final_lr_logit(h, p);
        else if constexpr (std::is_same_v<P, LayerLRParams>)
          return forward_layer_lr(h, p);
        else
          return forward_layer_mlp(h, p);
      },
      probe);
}

inline double probe_probability(const Probe& probe, const LayerTensor& h) { return sigmoid(probe_logit(probe, h)); }

/// Layer aggregation weights of a layer-weighted probe.
inline std::vector<double> aggregation_weights(const Probe& probe) {
  if (const auto* p = std::get_if<LayerLRParams>(&probe)) return softmax(p->theta);
  if (const auto* p = std::get_if<LayerMLPParams>(&probe)) return sparsemax(p->theta);
  fail(ErrorKind::UnsupportedVariant, "final-lr probes have no layer weights");
}

// ---------------------------------------------------------------------------
// Loss

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logit
};

/// Mean of -[pos_weight*y*log(sigmoid(z)) + (1-y)*log(1-sigmoid(z))].
inline LossAndGrad bce_logits_loss(std::span<const double> logits, std::span<const int> labels, double pos_weight) {
  if (logits.size() != labels.size()) fail(ErrorKind::DimensionMismatch, "logits and labels differ in length");
  LossAndGrad out;
  out.grad.resize(logits.size());
  if (logits.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    if (labels[i] == kParametric) {
      out.loss += pos_weight * softplus(-z);
      out.grad[i] = pos_weight * (sigmoid(z) - 1.0) * inv_n;
    } else {
      out.loss += softplus(z);
      out.grad[i] = sigmoid(z) * inv_n;
    }
  }
  out.loss *= inv_n;
  return out;
}

// ---------------------------------------------------------------------------
// Backward passes

/// A mini-batch view: inputs, labels and optional per-example dropout masks.
struct Batch {
  std::vector<const LayerTensor*> inputs;
  std::vector<int> labels;
  std::vector<DropoutMask> masks;  // empty = no dropout

  std::size_t size() const { return inputs.size(); }
  const DropoutMask* mask(std::size_t i) const { return masks.empty() ? nullptr : &masks[i]; }
};

template <typename Params>
struct ParamGrad {
  double loss = 0.0;
  Params grad;
};

/// Gradient of the pos-weighted BCE w.r.t. (w, b); scaler statistics are fixed.
inline ParamGrad<FinalLRParams> backward(const FinalLRParams& p, const Batch& batch, double pos_weight) {
  std::vector<std::vector<double>> xs;
  std::vector<double> logits;
  for (const auto* h : batch.inputs) {
    xs.push_back(standardize_last_layer(*h, p));
    logits.push_back(detail::dot(p.w, xs.back()) + p.b);
  }
  const auto lg = bce_logits_loss(logits, batch.labels, pos_weight);
  ParamGrad<FinalLRParams> out;
  out.loss = lg.loss;
  out.grad.layers = p.layers;
  out.grad.w.assign(p.hidden(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < p.hidden(); ++j) out.grad.w[j] += lg.grad[i] * xs[i][j];
    out.grad.b += lg.grad[i];
  }
  return out;
}

inline ParamGrad<LayerLRParams> backward(const LayerLRParams& p, const Batch& batch, double pos_weight) {
  const std::size_t L = p.layers(), H = p.hidden();
  const auto alpha = softmax(p.theta);

  std::vector<LayerMatrix> normalized;
  std::vector<std::vector<double>> dropped;  // dropout(hbar)
  std::vector<double> logits;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::check_shape(*batch.inputs[i], L, H);
    detail::check_mask(batch.mask(i), H);
    normalized.push_back(l2_normalize_layers(*batch.inputs[i]));
    auto d = blend(normalized.back(), alpha);
    if (const auto* m = batch.mask(i))
      for (std::size_t j = 0; j < H; ++j) d[j] *= m->scale(j);
    logits.push_back(detail::dot(p.w, d) + p.b);
    dropped.push_back(std::move(d));
  }
  const auto lg = bce_logits_loss(logits, batch.labels, pos_weight);

  ParamGrad<LayerLRParams> out;
  out.loss = lg.loss;
  out.grad.w.assign(H, 0.0);
  std::vector<double> grad_alpha(L, 0.0), grad_hbar(H);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double g = lg.grad[i];
    const auto* m = batch.mask(i);
    for (std::size_t j = 0; j < H; ++j) {
      out.grad.w[j] += g * dropped[i][j];
      grad_hbar[j] = g * p.w[j] * (m ? m->scale(j) : 1.0);
    }
    out.grad.b += g;
    for (std::size_t l = 0; l < L; ++l) grad_alpha[l] += detail::dot(normalized[i].row(l), grad_hbar);
  }
  out.grad.theta = softmax_backward(alpha, grad_alpha);
  return out;
}

inline ParamGrad<LayerMLPParams> backward(const LayerMLPParams& p, const Batch& batch, double pos_weight) {
  const std::size_t L = p.layers(), H = p.hidden(), M = p.m;
  const auto alpha = sparsemax(p.theta);

  std::vector<LayerMatrix> normalized;
  std::vector<std::vector<double>> hbars, pre;  // hbar, W1 hbar
  std::vector<double> logits;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::check_shape(*batch.inputs[i], L, H);
    detail::check_mask(batch.mask(i), M);
    normalized.push_back(l2_normalize_layers(*batch.inputs[i]));
    hbars.push_back(blend(normalized.back(), alpha));
    std::vector<double> u(M);
    double z = p.b;
    for (std::size_t k = 0; k < M; ++k) {
      u[k] = detail::dot({p.W1.data() + k * H, H}, hbars.back());
      z += p.w2[k] * gelu(u[k]) * (batch.mask(i) ? batch.mask(i)->scale(k) : 1.0);
    }
    pre.push_back(std::move(u));
    logits.push_back(z);
  }
  const auto lg = bce_logits_loss(logits, batch.labels, pos_weight);

  ParamGrad<LayerMLPParams> out;
  out.loss = lg.loss;
  out.grad.m = M;
  out.grad.W1.assign(M * H, 0.0);
  out.grad.w2.assign(M, 0.0);
  std::vector<double> grad_alpha(L, 0.0), grad_u(M), grad_hbar(H);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double g = lg.grad[i];
    const auto* m = batch.mask(i);
    for (std::size_t k = 0; k < M; ++k) {
      const double s = m ? m->scale(k) : 1.0;
      out.grad.w2[k] += g * gelu(pre[i][k]) * s;
      grad_u[k] = g * p.w2[k] * s * gelu_grad(pre[i][k]);
    }
    out.grad.b += g;
    std::fill(grad_hbar.begin(), grad_hbar.end(), 0.0);
    for (std::size_t k = 0; k < M; ++k) {
      if (grad_u[k] == 0.0) continue;
      const double* w1 = p.W1.data() + k * H;
      double* gw1 = out.grad.W1.data() + k * H;
      for (std::size_t j = 0; j < H; ++j) {
        gw1[j] += grad_u[k] * hbars[i][j];
        grad_hbar[j] += grad_u[k] * w1[j];
      }
    }
    for (std::size_t l = 0; l < L; ++l) grad_alpha[l] += detail::dot(normalized[i].row(l), grad_hbar);
  }
  out.grad.theta = sparsemax_backward(alpha, grad_alpha);
  return out;
}

/// Batch loss only, for line searches and finite-difference checks.
template <typename Params>
double batch_loss(const Params& p, const Batch& batch, double pos_weight) {
  return backward(p, batch, pos_weight).loss;
}

// ---------------------------------------------------------------------------
// Flat views of the trainable parameters (optimizer and gradient checks)

inline std::vector<double> pack(const FinalLRParams& p) {
  std::vector<double> v(p.w);
  v.push_back(p.b);
  return v;
}

inline void unpack(std::span<const double> v, FinalLRParams& p) {
  std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(p.w.size()), p.w.begin());
  p.b = v[p.w.size()];
}

inline std::vector<double> pack(const LayerLRParams& p) {
  std::vector<double> v(p.theta);
  v.insert(v.end(), p.w.begin(), p.w.end());
  v.push_back(p.b);
  return v;
}

inline void unpack(std::span<const double> v, LayerLRParams& p) {
  auto it = v.begin();
  for (auto& x : p.theta) x = *it++;
  for (auto& x : p.w) x = *it++;
  p.b = *it;
}

inline std::vector<double> pack(const LayerMLPParams& p) {
  std::vector<double> v(p.theta);
  v.insert(v.end(), p.W1.begin(), p.W1.end());
  v.insert(v.end(), p.w2.begin(), p.w2.end());
  v.push_back(p.b);
  return v;
}

inline void unpack(std::span<const double> v, LayerMLPParams& p) {
  auto it = v.begin();
  for (auto& x : p.theta) x = *it++;
  for (auto& x : p.W1) x = *it++;
  for (auto& x : p.w2) x = *it++;
  p.b = *it;
}

// ---------------------------------------------------------------------------
// Initialization: theta = 0, weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0.

inline LayerLRParams init_layer_lr(std::size_t layers, std::size_t hidden, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1a7e));
  LayerLRParams p;
  p.theta.assign(layers, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.w.resize(hidden);
  for (auto& x : p.w) x = rng.uniform(-bound, bound);
  return p;
}

inline LayerMLPParams init_layer_mlp(std::size_t layers, std::size_t hidden, std::size_t m, std::uint64_t seed) {
  if (m < 1) fail(ErrorKind::Usage, "bottleneck size must be at least 1");
  Rng rng(derive_seed(seed, 0x1a7f));
  LayerMLPParams p;
  p.m = m;
  p.theta.assign(layers, 0.0);
  const double b1 = 1.0 / std::sqrt(static_cast<double>(hidden));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(m));
  p.W1.resize(m * hidden);
  for (auto& x : p.W1) x = rng.uniform(-b1, b1);
  p.w2.resize(m);
  for (auto& x : p.w2) x = rng.uniform(-b2, b2);
  return p;
}

}  // namespace attriprobe

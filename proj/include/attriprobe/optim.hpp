#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "attriprobe/error.hpp"

namespace attriprobe {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with decoupled weight decay over a flat parameter vector.
class AdamW {
 public:
  using Hyper = AdamWHyper;

  AdamW() = default;
  explicit AdamW(std::size_t n, Hyper hyper = Hyper{}) : hyper_(hyper), m_(n, 0.0), v_(n, 0.0) {}

  /// param <- param - lr * mhat / (sqrt(vhat) + eps) - lr * wd * param
  void step(std::span<double> params, std::span<const double> grads, double lr, double wd) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      fail(ErrorKind::DimensionMismatch, "AdamW state does not match parameter count");
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      m_[i] = hyper_.beta1 * m_[i] + (1.0 - hyper_.beta1) * g;
      v_[i] = hyper_.beta2 * v_[i] + (1.0 - hyper_.beta2) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + hyper_.eps) + lr * wd * params[i];
    }
  }

  std::size_t step_count() const { return t_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  const Hyper& hyper() const { return hyper_; }

 private:
  Hyper hyper_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace attriprobe

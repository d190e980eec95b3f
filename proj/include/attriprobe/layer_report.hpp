#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "attriprobe/probes.hpp"

namespace attriprobe {

/// Index into [0, n) under half-sample symmetric reflection (d c b a | a b c d | d c b a).
inline std::size_t reflect_index(long long i, std::size_t n) {
  const long long period = 2 * static_cast<long long>(n);
  long long k = ((i % period) + period) % period;
  if (k >= static_cast<long long>(n)) k = period - 1 - k;
  return static_cast<std::size_t>(k);
}

/// Convolution with a normalized Gaussian truncated at 4 sigma, reflect-padded.
inline std::vector<double> gaussian_smooth(std::span<const double> values, double sigma) {
  if (!(sigma > 0)) fail(ErrorKind::Usage, "smoothing sigma must be positive");
  const auto radius = static_cast<long long>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (long long k = -radius; k <= radius; ++k) {
    const double x = static_cast<double>(k) / sigma;
    sum += kernel[k + radius] = std::exp(-0.5 * x * x);
  }
  for (auto& v : kernel) v /= sum;

  std::vector<double> out(values.size(), 0.0);
  const auto n = values.size();
  for (std::size_t i = 0; i < n; ++i)
    for (long long k = -radius; k <= radius; ++k)
      out[i] += kernel[k + radius] * values[reflect_index(static_cast<long long>(i) + k, n)];
  return out;
}

struct LayerWeightReport {
  std::vector<double> raw;       // aggregation weights per layer
  std::vector<double> smoothed;  // display curve
  std::size_t argmax_layer = 0;  // 1-based, taken on the raw weights
  std::size_t smoothed_argmax_layer = 0;
  double sigma = 1.0;
};

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline LayerWeightReport layer_weight_report(const Probe& probe, double sigma = 1.0) {
  LayerWeightReport r;
  r.sigma = sigma;
  r.raw = aggregation_weights(probe);
  r.smoothed = gaussian_smooth(r.raw, sigma);
  r.argmax_layer = argmax(r.raw) + 1;
  r.smoothed_argmax_layer = argmax(r.smoothed) + 1;
  return r;
}

inline std::string to_csv(const LayerWeightReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "layer,raw,smoothed\n";
  for (std::size_t l = 0; l < r.raw.size(); ++l) os << (l + 1) << ',' << r.raw[l] << ',' << r.smoothed[l] << '\n';
  return os.str();
}

}  // namespace attriprobe

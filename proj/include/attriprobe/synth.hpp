#pragma once

// Synthetic activation datasets with a planted, linearly separable source
// signal. Every record is drawn from its own derived RNG stream, so any record
// can be regenerated from (spec, index) alone.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "attriprobe/activation_store.hpp"
#include "attriprobe/rng.hpp"
#include "json.hpp"

namespace attriprobe {

struct SynthSpec {
  std::size_t layers = 8;
  std::size_t hidden = 32;
  std::size_t planted_layer = 6;  // 1-based
  double separation = 5.0;        // mu
  double noise_scale = 1.0;
  std::size_t n_per_class = 500;
  std::size_t title_count = 100;
  std::uint64_t seed = 42;
  std::string model_id = "synth";

  void validate() const {
    if (layers < 1 || hidden < 1) fail(ErrorKind::Usage, "synthetic data needs L >= 1 and H >= 1");
    if (planted_layer < 1 || planted_layer > layers) fail(ErrorKind::Usage, "planted layer must lie in [1, L]");
    if (!(separation >= 0) || !(noise_scale >= 0)) fail(ErrorKind::Usage, "separation and noise must be non-negative");
    if (title_count < 1) fail(ErrorKind::Usage, "title count must be >= 1");
  }
};

struct DecoySpec {
  SynthSpec base;
  std::size_t decoy_layer = 2;  // 1-based, shallow
  double decoy_separation = 5.0;
  double rho = 0.95;  // P(decoy sign agrees with the label) in the training distribution
  std::size_t test_n_per_class = 500;

  void validate() const {
    base.validate();
    if (decoy_layer < 1 || decoy_layer > base.layers) fail(ErrorKind::Usage, "decoy layer must lie in [1, L]");
    if (!(rho >= 0.5 && rho < 1.0)) fail(ErrorKind::Usage, "rho must lie in [0.5, 1)");
  }
};

struct SynthData {
  Dataset dataset;
  std::vector<double> direction;
};

struct DecoyData {
  Dataset train;  // true + decoy signal
  Dataset test;   // true signal only; decoy sign independent of the label
  std::vector<double> direction;
  std::vector<double> decoy_direction;
};

namespace detail {

enum : std::uint64_t { kDirectionStream = 1, kDecoyDirectionStream = 2, kDecoyAssignStream = 3, kRecordStream = 1000 };

inline std::vector<double> unit_direction(std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> d(hidden);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto& v : d) {
      v = rng.normal();
      sq += v * v;
    }
  } while (sq == 0.0);
  for (auto& v : d) v /= std::sqrt(sq);
  return d;
}

inline std::string numbered(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%06zu", prefix, i);
  return buf;
}

/// Record with Gaussian noise and the class-signed planted direction.
inline ActivationRecord make_record(const SynthSpec& s, const std::vector<double>& dir, int label, std::uint64_t stream,
                                    std::string id, std::string title) {
  Rng rng(derive_seed(s.seed, stream));
  ActivationRecord r;
  r.id = std::move(id);
  r.title = std::move(title);
  r.label = label;
  r.model_id = s.model_id;
  r.tensor = LayerTensor(s.layers, s.hidden);
  for (auto& v : r.tensor.data) v = static_cast<float>(s.noise_scale * rng.normal());
  const double sign = label == kParametric ? 1.0 : -1.0;
  auto row = r.tensor.row(s.planted_layer - 1);
  for (std::size_t j = 0; j < s.hidden; ++j) row[j] = static_cast<float>(row[j] + sign * s.separation * dir[j]);
  return r;
}

inline void add_decoy(ActivationRecord& r, std::size_t layer, double sep, const std::vector<double>& dir, bool agrees) {
  const double label_sign = r.label == kParametric ? 1.0 : -1.0;
  const double sign = agrees ? label_sign : -label_sign;
  auto row = r.tensor.row(layer - 1);
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = static_cast<float>(row[j] + sign * sep * dir[j]);
}

/// Per class, exactly round(rate * n) records get an agreeing decoy; positions shuffled.
inline std::vector<bool> agreement_pattern(std::size_t n, double rate, Rng& rng) {
  const auto agree = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  std::vector<bool> pattern(n, false);
  for (std::size_t i = 0; i < agree && i < n; ++i) pattern[i] = true;
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<bool> out(n);
  for (std::size_t i = 0; i < n; ++i) out[perm[i]] = pattern[i];
  return out;
}

}  // namespace detail

/// Record order: pairs (parametric, contextual); pair i uses title i mod title_count.
inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  SynthData out;
  out.direction = detail::unit_direction(spec.hidden, derive_seed(spec.seed, detail::kDirectionStream));
  out.dataset = Dataset{spec.model_id, spec.layers, spec.hidden, {}};
  out.dataset.records.reserve(2 * spec.n_per_class);
  for (std::size_t i = 0; i < spec.n_per_class; ++i) {
    const auto title = detail::numbered("title-", i % spec.title_count);
    for (int label : {kParametric, kContextual}) {
      const std::size_t idx = 2 * i + (label == kParametric ? 0 : 1);
      out.dataset.records.push_back(detail::make_record(spec, out.direction, label, detail::kRecordStream + idx,
                                                        detail::numbered("synth-", idx), title));
    }
  }
  return out;
}

inline DecoyData generate_decoy(const DecoySpec& spec) {
  spec.validate();
  const auto& s = spec.base;
  DecoyData out;
  auto base = generate(s);
  out.train = std::move(base.dataset);
  out.direction = std::move(base.direction);
  out.decoy_direction = detail::unit_direction(s.hidden, derive_seed(s.seed, detail::kDecoyDirectionStream));

  Rng assign(derive_seed(s.seed, detail::kDecoyAssignStream));
  const auto train_pos = detail::agreement_pattern(s.n_per_class, spec.rho, assign);
  const auto train_neg = detail::agreement_pattern(s.n_per_class, spec.rho, assign);
  for (std::size_t i = 0; i < s.n_per_class; ++i) {
    detail::add_decoy(out.train.records[2 * i], spec.decoy_layer, spec.decoy_separation, out.decoy_direction, train_pos[i]);
    detail::add_decoy(out.train.records[2 * i + 1], spec.decoy_layer, spec.decoy_separation, out.decoy_direction,
                      train_neg[i]);
  }

  const auto test_pos = detail::agreement_pattern(spec.test_n_per_class, 0.5, assign);
  const auto test_neg = detail::agreement_pattern(spec.test_n_per_class, 0.5, assign);
  out.test = Dataset{s.model_id, s.layers, s.hidden, {}};
  const std::uint64_t test_stream = detail::kRecordStream + 2 * s.n_per_class;
  for (std::size_t i = 0; i < spec.test_n_per_class; ++i) {
    const auto title = detail::numbered("test-title-", i % s.title_count);
    for (int label : {kParametric, kContextual}) {
      const std::size_t idx = 2 * i + (label == kParametric ? 0 : 1);
      auto r = detail::make_record(s, out.direction, label, test_stream + idx, detail::numbered("test-", idx), title);
      detail::add_decoy(r, spec.decoy_layer, spec.decoy_separation, out.decoy_direction,
                        label == kParametric ? test_pos[i] : test_neg[i]);
      out.test.records.push_back(std::move(r));
    }
  }
  return out;
}

inline nlohmann::json ground_truth_json(const SynthSpec& s, const std::vector<double>& direction) {
  return {{"generator", "planted-direction"},
          {"L", s.layers},
          {"H", s.hidden},
          {"planted_layer", s.planted_layer},
          {"separation", s.separation},
          {"noise_scale", s.noise_scale},
          {"n_per_class", s.n_per_class},
          {"title_count", s.title_count},
          {"seed", s.seed},
          {"model_id", s.model_id},
          {"label_sign", {{"parametric", 1}, {"contextual", -1}}},
          {"direction", direction}};
}

inline nlohmann::json ground_truth_json(const DecoySpec& s, const DecoyData& d) {
  auto j = ground_truth_json(s.base, d.direction);
  j["generator"] = "planted-direction-with-decoy";
  j["decoy_layer"] = s.decoy_layer;
  j["decoy_separation"] = s.decoy_separation;
  j["rho"] = s.rho;
  j["test_n_per_class"] = s.test_n_per_class;
  j["decoy_direction"] = d.decoy_direction;
  return j;
}

}  // namespace attriprobe

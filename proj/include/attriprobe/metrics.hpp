#pragma once

#include <array>
#include <span>

#include "attriprobe/error.hpp"
#include "json.hpp"

namespace attriprobe {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::array<ClassScores, 2> per_class{};
  // confusion[true][predicted]
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::size_t n = 0;
};

/// Precision/recall/F1 per class; an undefined ratio (0/0) counts as 0.
inline Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) fail(ErrorKind::DimensionMismatch, "predictions and labels differ in length");
  if (labels.empty()) fail(ErrorKind::InsufficientData, "metrics need at least one example");
  Metrics m;
  m.n = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) fail(ErrorKind::Validation, "labels must be binary");
    ++m.confusion[t][p];
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  for (int c = 0; c < 2; ++c) {
    const std::size_t tp = m.confusion[c][c];
    const std::size_t predicted = m.confusion[0][c] + m.confusion[1][c];
    const std::size_t actual = m.confusion[c][0] + m.confusion[c][1];
    auto& s = m.per_class[c];
    s.support = actual;
    s.precision = ratio(tp, predicted);
    s.recall = ratio(tp, actual);
    s.f1 = (s.precision + s.recall) > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  }
  m.macro_f1 = 0.5 * (m.per_class[0].f1 + m.per_class[1].f1);
  m.accuracy = ratio(m.confusion[0][0] + m.confusion[1][1], m.n);
  return m;
}

inline nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j;
  j["macro_f1"] = m.macro_f1;
  j["accuracy"] = m.accuracy;
  j["n"] = m.n;
  for (int c = 0; c < 2; ++c) {
    const auto& s = m.per_class[c];
    j["per_class"][c == 0 ? "contextual" : "parametric"] = {
        {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  j["confusion"] = {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}};
  return j;
}

}  // namespace attriprobe

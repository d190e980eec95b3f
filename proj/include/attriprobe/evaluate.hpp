#pragma once

#include <vector>

#include "attriprobe/activation_store.hpp"
#include "attriprobe/metrics.hpp"
#include "attriprobe/probes.hpp"
#include "attriprobe/stats.hpp"

namespace attriprobe {

struct Evaluation {
  Metrics metrics;
  std::vector<double> scores;  // P(parametric) per record
  std::vector<int> predictions;
  double threshold = 0.5;
};

/// Deterministic scoring, no dropout; a record is parametric when score >= threshold.
inline Evaluation evaluate_probe(const Probe& probe, const Dataset& ds, double threshold = 0.5) {
  if (ds.layers != probe_layers(probe) || ds.hidden != probe_hidden(probe))
    fail(ErrorKind::DimensionMismatch, "dataset is " + std::to_string(ds.layers) + "x" + std::to_string(ds.hidden) +
                                           ", probe expects " + std::to_string(probe_layers(probe)) + "x" +
                                           std::to_string(probe_hidden(probe)));
  Evaluation ev;
  ev.threshold = threshold;
  for (const auto& r : ds.records) {
    ev.scores.push_back(probe_probability(probe, r.tensor));
    ev.predictions.push_back(ev.scores.back() >= threshold ? kParametric : kContextual);
  }
  ev.metrics = compute_metrics(ev.predictions, labels_of(ds));
  return ev;
}

/// Observations for mismatch analysis from annotated records and probe predictions.
/// Records without both `source_required` and `correct` are skipped.
inline std::vector<MismatchObservation> mismatch_observations(const Dataset& ds, std::span<const int> predictions) {
  std::vector<MismatchObservation> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records[i];
    if (!r.source_required || !r.correct) continue;
    out.push_back({*r.source_required, predictions[i], *r.correct});
  }
  return out;
}

}  // namespace attriprobe

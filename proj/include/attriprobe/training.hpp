#pragma once

// Training recipes: AdamW mini-batch training with title-aware early stopping
// for the layer-weighted probes, a convex full-batch fit for FinalLR, and the
// hyperparameter grid search.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "attriprobe/activation_store.hpp"
#include "attriprobe/logistic.hpp"
#include "attriprobe/metrics.hpp"
#include "attriprobe/optim.hpp"
#include "attriprobe/parallel.hpp"
#include "attriprobe/probes.hpp"
#include "json.hpp"

namespace attriprobe {

struct TrainConfig {
  ProbeVariant variant = ProbeVariant::LayerLR;
  double learning_rate = 2e-3;
  double weight_decay = 1e-3;
  double dropout_p = 0.1;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 3;
  double val_fraction = 0.15;
  std::uint64_t seed = 42;
  std::size_t bottleneck_m = 64;

  /// Published recipe for each variant.
  static TrainConfig defaults(ProbeVariant v) {
    TrainConfig c;
    c.variant = v;
    if (v == ProbeVariant::LayerMLP) c.learning_rate = 1e-3;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0)) fail(ErrorKind::Usage, "learning rate must be positive");
    if (!(weight_decay >= 0)) fail(ErrorKind::Usage, "weight decay must be non-negative");
    if (!(dropout_p >= 0 && dropout_p < 1)) fail(ErrorKind::Usage, "dropout must lie in [0, 1)");
    if (batch_size < 1 || max_epochs < 1 || patience < 1) fail(ErrorKind::Usage, "batch, epochs and patience must be >= 1");
    if (!(val_fraction > 0 && val_fraction < 1)) fail(ErrorKind::Usage, "validation fraction must lie in (0, 1)");
    if (variant == ProbeVariant::LayerMLP && bottleneck_m < 1) fail(ErrorKind::Usage, "bottleneck m must be >= 1");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"variant", to_string(c.variant)}, {"seed", c.seed}};
  if (c.variant == ProbeVariant::FinalLR) {
    j["C"] = 1.0;
    j["max_iter"] = 1000;
    j["class_weight"] = "balanced";
    return j;
  }
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["dropout"] = c.dropout_p;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["val_fraction"] = c.val_fraction;
  if (c.variant == ProbeVariant::LayerMLP) j["bottleneck_m"] = c.bottleneck_m;
  return j;
}

/// Early stopping on validation macro-F1.
///
/// An epoch improves on the best so far when its macro-F1 is higher, or equal
/// with a strictly lower validation loss. Training stops after `patience`
/// epochs without improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when this epoch becomes the new best.
  bool update(double macro_f1, double val_loss = 0.0) {
    ++epoch_;
    if (best_epoch_ == 0 || macro_f1 > best_ || (macro_f1 == best_ && val_loss < best_loss_)) {
      best_ = macro_f1;
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before the first update
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = 0.0;
  double best_loss_ = 0.0;
  std::size_t best_epoch_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_macro_f1 = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  Probe probe;
  TrainConfig config;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  ClassStats train_stats;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::optional<Metrics> val_metrics;
  std::optional<LogisticFit> solver;  // FinalLR only
};

inline std::vector<int> predict(const Probe& probe, const Dataset& ds, double threshold = 0.5) {
  std::vector<int> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) out.push_back(probe_probability(probe, r.tensor) >= threshold ? 1 : 0);
  return out;
}

// ---------------------------------------------------------------------------
// FinalLR

struct FinalLRFit {
  FinalLRParams params;
  LogisticFit solver;
};

/// Standardizes the last layer, then fits balanced L2 logistic regression (C = 1).
inline FinalLRFit fit_final_lr(const Dataset& train, const LogisticOptions& opt = {}) {
  const auto labels = labels_of(train);
  class_stats(std::span<const int>(labels));  // both classes required
  const std::size_t N = train.size(), H = train.hidden;

  FinalLRParams p;
  p.layers = train.layers;
  p.scaler_mean.assign(H, 0.0);
  p.scaler_std.assign(H, 0.0);
  for (const auto& r : train.records) {
    const auto last = r.tensor.row(train.layers - 1);
    for (std::size_t j = 0; j < H; ++j) p.scaler_mean[j] += last[j];
  }
  for (auto& m : p.scaler_mean) m /= static_cast<double>(N);
  for (const auto& r : train.records) {
    const auto last = r.tensor.row(train.layers - 1);
    for (std::size_t j = 0; j < H; ++j) {
      const double d = last[j] - p.scaler_mean[j];
      p.scaler_std[j] += d * d;
    }
  }
  for (auto& s : p.scaler_std) {
    s = std::sqrt(s / static_cast<double>(N));
    if (!(s > 0)) s = 1.0;
  }

  DenseDesign X{N, H, std::vector<double>(N * H)};
  for (std::size_t i = 0; i < N; ++i) {
    const auto last = train.records[i].tensor.row(train.layers - 1);
    for (std::size_t j = 0; j < H; ++j) X.data[i * H + j] = (last[j] - p.scaler_mean[j]) / p.scaler_std[j];
  }
  const auto [w_neg, w_pos] = balanced_class_weights(labels);
  std::vector<double> s(N);
  for (std::size_t i = 0; i < N; ++i) s[i] = labels[i] == kParametric ? w_pos : w_neg;

  FinalLRFit out;
  out.solver = fit_logistic(X, labels, s, opt);
  p.w = out.solver.w;
  p.b = out.solver.b;
  out.params = std::move(p);
  return out;
}

// ---------------------------------------------------------------------------
// Layer-weighted probes

namespace detail {

template <typename Params>
TrainResult train_layer_probe(Params params, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  TrainResult result;
  result.config = cfg;
  result.n_train = train.size();
  result.n_val = val.size();
  result.train_stats = class_stats(train);
  const double pos_weight = result.train_stats.pos_weight;
  const std::size_t dropout_width = [&] {
    if constexpr (std::is_same_v<Params, LayerMLPParams>)
      return params.m;
    else
      return params.hidden();
  }();

  AdamW opt(pack(params).size());
  Rng shuffle_rng(derive_seed(cfg.seed, 2));
  Rng dropout_rng(derive_seed(cfg.seed, 3));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto val_labels = labels_of(val);

  EarlyStopping stopper(cfg.patience);
  Params best = params;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Batch batch;
      for (std::size_t k = start; k < end; ++k) {
        const auto& rec = train.records[order[k]];
        batch.inputs.push_back(&rec.tensor);
        batch.labels.push_back(rec.label);
        if (cfg.dropout_p > 0) batch.masks.push_back(DropoutMask::sample(dropout_width, cfg.dropout_p, dropout_rng));
      }
      const auto pg = backward(params, batch, pos_weight);
      auto flat = pack(params);
      const auto grad = pack(pg.grad);
      opt.step(flat, grad, cfg.learning_rate, cfg.weight_decay);
      unpack(flat, params);
      loss_sum += pg.loss * static_cast<double>(batch.size());
    }
    if (!std::isfinite(loss_sum))
      fail(ErrorKind::Numeric, "training loss became non-finite at epoch " + std::to_string(epoch));

    std::vector<double> logits;
    logits.reserve(val.size());
    const Probe current{params};
    for (const auto& r : val.records) logits.push_back(probe_logit(current, r.tensor));
    const double val_loss = bce_logits_loss(logits, val_labels, pos_weight).loss;
    std::vector<int> preds;
    for (double z : logits) preds.push_back(sigmoid(z) >= 0.5 ? kParametric : kContextual);
    const auto m = compute_metrics(preds, val_labels);
    result.history.push_back({epoch, loss_sum / static_cast<double>(train.size()), val_loss, m.macro_f1, m.accuracy});
    if (stopper.update(m.macro_f1, val_loss)) {
      best = params;
      result.val_metrics = m;
    }
    if (stopper.should_stop()) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.probe = std::move(best);
  return result;
}

}  // namespace detail

/// Trains one probe. Layer-weighted variants carve a title-disjoint validation
/// split (val_fraction, seed) from `ds` for early stopping on macro-F1 and
/// return the parameters of the best epoch. FinalLR is fit on all of `ds`.
inline TrainResult train_probe(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.variant == ProbeVariant::FinalLR) {
    TrainResult r;
    r.config = cfg;
    r.train_stats = class_stats(ds);
    r.n_train = ds.size();
    auto fit = fit_final_lr(ds);
    r.probe = std::move(fit.params);
    r.solver = std::move(fit.solver);
    return r;
  }

  const auto split = split_title_disjoint(ds, {1.0 - cfg.val_fraction, cfg.val_fraction, 0.0}, cfg.seed);
  const auto train = split.part(ds, Split::Train);
  const auto val = split.part(ds, Split::Val);
  if (train.empty() || val.empty())
    fail(ErrorKind::DegenerateDataset, "title-disjoint validation split left an empty partition (" +
                                           std::to_string(train.size()) + " train, " + std::to_string(val.size()) +
                                           " val)");
  class_stats(train);
  if (cfg.variant == ProbeVariant::LayerLR)
    return detail::train_layer_probe(init_layer_lr(ds.layers, ds.hidden, cfg.seed), train, val, cfg);
  return detail::train_layer_probe(init_layer_mlp(ds.layers, ds.hidden, cfg.bottleneck_m, cfg.seed), train, val, cfg);
}

inline nlohmann::json to_json(const TrainResult& r) {
  nlohmann::json j;
  j["config"] = to_json(r.config);
  j["pos_weight"] = r.train_stats.pos_weight;
  j["train_counts"] = {{"parametric", r.train_stats.count_pos}, {"contextual", r.train_stats.count_neg}};
  j["n_train"] = r.n_train;
  j["n_val"] = r.n_val;
  j["best_epoch"] = r.best_epoch;
  j["history"] = nlohmann::json::array();
  for (const auto& e : r.history)
    j["history"].push_back({{"epoch", e.epoch},
                            {"train_loss", e.train_loss},
                            {"val_loss", e.val_loss},
                            {"val_macro_f1", e.val_macro_f1},
                            {"val_accuracy", e.val_accuracy}});
  if (r.val_metrics) j["val_metrics"] = to_json(*r.val_metrics);
  if (r.solver)
    j["solver"] = {{"iterations", r.solver->iterations},
                   {"converged", r.solver->converged},
                   {"grad_inf_norm", r.solver->grad_inf_norm},
                   {"final_objective", r.solver->objective_history.back()}};
  return j;
}

// ---------------------------------------------------------------------------
// Grid search

struct GridSpace {
  std::vector<double> dropout{0.0, 0.1, 0.2};
  std::vector<double> weight_decay{0.0, 5e-4, 1e-3, 2e-3};
  std::vector<double> learning_rate{5e-4, 1e-3, 2e-3};
  std::vector<std::size_t> bottleneck_m{64, 128};  // LayerMLP only
  std::size_t epochs_per_config = 10;
};

/// Cross product in order dropout, weight decay, learning rate, bottleneck (innermost).
inline std::vector<TrainConfig> enumerate_grid(const GridSpace& space, const TrainConfig& base) {
  if (base.variant == ProbeVariant::FinalLR) fail(ErrorKind::UnsupportedVariant, "grid search covers layer-lr and layer-mlp");
  std::vector<TrainConfig> out;
  const std::vector<std::size_t> ms =
      base.variant == ProbeVariant::LayerMLP ? space.bottleneck_m : std::vector<std::size_t>{base.bottleneck_m};
  for (double p : space.dropout)
    for (double wd : space.weight_decay)
      for (double lr : space.learning_rate)
        for (std::size_t m : ms) {
          TrainConfig c = base;
          c.dropout_p = p;
          c.weight_decay = wd;
          c.learning_rate = lr;
          c.bottleneck_m = m;
          c.max_epochs = space.epochs_per_config;
          out.push_back(c);
        }
  return out;
}

struct GridResult {
  TrainConfig config;
  double val_macro_f1 = 0.0;
  double val_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

/// Highest validation macro-F1; ties go to validation accuracy, then enumeration order.
inline std::size_t select_best(std::span<const GridResult> results) {
  if (results.empty()) fail(ErrorKind::Usage, "empty grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    const auto& a = results[i];
    const auto& b = results[best];
    if (a.val_macro_f1 > b.val_macro_f1 || (a.val_macro_f1 == b.val_macro_f1 && a.val_accuracy > b.val_accuracy))
      best = i;
  }
  return best;
}

struct GridSearchOutcome {
  std::vector<GridResult> results;
  std::size_t best_index = 0;
  TrainConfig best() const { return results[best_index].config; }
};

inline GridSearchOutcome grid_search(const Dataset& ds, const GridSpace& space, const TrainConfig& base,
                                     std::size_t threads = 1) {
  const auto configs = enumerate_grid(space, base);
  if (configs.empty()) fail(ErrorKind::Usage, "grid space is empty");
  GridSearchOutcome out;
  out.results.resize(configs.size());
  parallel_for(configs.size(), threads, [&](std::size_t i) {
    const auto run = train_probe(ds, configs[i]);
    auto& r = out.results[i];
    r.config = configs[i];
    r.best_epoch = run.best_epoch;
    r.epochs_run = run.history.size();
    r.val_macro_f1 = run.history[run.best_epoch - 1].val_macro_f1;
    r.val_accuracy = run.history[run.best_epoch - 1].val_accuracy;
  });
  out.best_index = select_best(out.results);
  return out;
}

}  // namespace attriprobe

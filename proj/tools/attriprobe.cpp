// attriprobe command-line tool.
//
//   attriprobe <command> [flags] --out DIR
//
// Every command writes its artifacts plus manifest.json under --out.
// Exit codes: 0 success, 2 usage, 3 data, 4 numeric.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attriprobe/attriprobe.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace attriprobe;

namespace {

std::string sha256_bytes(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::Io, "SHA-256 computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sha256_file(const std::string& path) { return sha256_bytes(read_file(path)); }

/// Collects inputs, outputs and config for manifest.json.
class Run {
 public:
  Run(std::string command, std::string out_dir) : command_(std::move(command)), out_(std::move(out_dir)) {
    if (out_.empty()) fail(ErrorKind::Usage, "--out is required");
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory '" + out_ + "': " + ec.message());
  }

  json config;
  std::uint64_t seed = 0;

  std::string path(const std::string& name) const { return (fs::path(out_) / name).string(); }

  void input(const std::string& p) { inputs_.push_back({{"path", p}, {"sha256", sha256_file(p)}}); }

  /// Writes atomically through a temporary file.
  void write(const std::string& name, const std::string& bytes) {
    const auto final_path = path(name);
    const auto tmp = final_path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) fail(ErrorKind::Io, "cannot write '" + tmp + "'");
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) fail(ErrorKind::Io, "short write to '" + tmp + "'");
    }
    fs::rename(tmp, final_path);
    record(name);
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  /// Registers a file produced by a library writer.
  void record(const std::string& name) { outputs_[name] = sha256_file(path(name)); }

  void finish() {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json outputs = json::array();
    for (const auto& [name, digest] : outputs_) outputs.push_back({{"path", name}, {"sha256", digest}});
    const json manifest = {{"command", command_}, {"version", kVersion}, {"seed", seed},
                           {"config", config},    {"inputs", inputs_},   {"outputs", outputs},
                           {"wall_time_seconds", wall}};
    write_json("manifest.json", manifest);
  }

 private:
  std::string command_;
  std::string out_;
  json inputs_ = json::array();
  std::map<std::string, std::string> outputs_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Dataset load_data(Run& run, const std::string& path) {
  auto ds = read_dataset(path);
  run.input(path);
  return ds;
}

Probe load_probe_file(Run& run, const std::string& path) {
  auto p = load_probe(path);
  run.input(path);
  return p;
}

/// Train pool and held-out test part of a title-disjoint split; test_fraction 0 keeps everything.
std::pair<Dataset, Dataset> holdout(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0 && test_fraction < 1)) fail(ErrorKind::Usage, "--test-fraction must lie in [0, 1)");
  if (test_fraction == 0) return {ds, Dataset{ds.model_id, ds.layers, ds.hidden, {}}};
  const auto split = split_title_disjoint(ds, {1.0 - test_fraction, 0.0, test_fraction}, seed);
  return {split.part(ds, Split::Train), split.part(ds, Split::Test)};
}

ProbeVariant variant_arg(const std::string& s) {
  const auto v = parse_variant(s);
  if (!v) fail(ErrorKind::Usage, "unknown variant '" + s + "' (expected final-lr, layer-lr or layer-mlp)");
  return *v;
}

// ---------------------------------------------------------------------------

struct CommonArgs {
  std::string out;
  std::uint64_t seed = 42;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--seed", a.seed, "Seed for every random choice")->capture_default_str();
}

struct TrainArgs {
  CommonArgs common;
  std::string data, variant = "layer-lr";
  TrainConfig cfg;
  double test_fraction = 0.2;
};

void cmd_train(const TrainArgs& a, const CLI::App& cmd) {
  const auto variant = variant_arg(a.variant);
  TrainConfig cfg = a.cfg;
  if (variant == ProbeVariant::FinalLR) {
    for (const char* flag : {"--lr", "--wd", "--dropout", "--batch", "--epochs", "--patience", "--m", "--val-fraction"})
      if (cmd.count(flag) > 0)
        fail(ErrorKind::Usage, std::string(flag) + " does not apply to final-lr (convex fit without dropout or SGD)");
  } else if (variant == ProbeVariant::LayerMLP && cmd.count("--lr") == 0) {
    cfg.learning_rate = TrainConfig::defaults(variant).learning_rate;
  }
  if (variant != ProbeVariant::LayerMLP && cmd.count("--m") > 0) fail(ErrorKind::Usage, "--m applies to layer-mlp only");
  cfg.variant = variant;
  cfg.seed = a.common.seed;
  cfg.validate();

  Run run("train", a.common.out);
  run.seed = cfg.seed;
  run.config = to_json(cfg);
  run.config["test_fraction"] = a.test_fraction;
  const auto ds = load_data(run, a.data);
  const auto [pool, test] = holdout(ds, a.test_fraction, cfg.seed);
  const auto result = train_probe(pool, cfg);

  save_probe(result.probe, run.path("probe.atrp"));
  run.record("probe.atrp");
  auto summary = to_json(result);
  summary["n_test"] = test.size();
  if (!test.empty()) summary["test_metrics"] = to_json(evaluate_probe(result.probe, test).metrics);
  run.write_json("train_summary.json", summary);
  run.finish();
}

struct EvalArgs {
  CommonArgs common;
  std::string data, probe, split = "all";
  double threshold = 0.5;
  double test_fraction = 0.2;
};

void cmd_eval(const EvalArgs& a) {
  if (a.split != "all" && a.split != "train" && a.split != "test")
    fail(ErrorKind::Usage, "--split must be all, train or test");
  Run run("eval", a.common.out);
  run.seed = a.common.seed;
  run.config = {{"threshold", a.threshold}, {"split", a.split}, {"test_fraction", a.test_fraction}};
  const auto probe = load_probe_file(run, a.probe);
  const auto all = load_data(run, a.data);
  Dataset ds = all;
  if (a.split != "all") {
    auto [pool, test] = holdout(all, a.test_fraction, a.common.seed);
    ds = a.split == "test" ? std::move(test) : std::move(pool);
  }
  if (ds.empty()) fail(ErrorKind::DegenerateDataset, "selected split is empty");
  const auto ev = evaluate_probe(probe, ds, a.threshold);

  json metrics = to_json(ev.metrics);
  metrics["threshold"] = a.threshold;
  metrics["split"] = a.split;
  metrics["variant"] = to_string(variant_of(probe));
  run.write_json("metrics.json", metrics);

  std::ostringstream csv;
  csv << "id,label,score,prediction\n";
  for (std::size_t i = 0; i < ds.size(); ++i)
    csv << ds.records[i].id << ',' << ds.records[i].label << ',' << fmt(ev.scores[i]) << ',' << ev.predictions[i]
        << '\n';
  run.write("scores.csv", csv.str());
  run.finish();
}

struct PcaArgs {
  CommonArgs common;
  std::string data;
  std::vector<std::size_t> layers;
};

void cmd_pca(const PcaArgs& a) {
  Run run("pca", a.common.out);
  run.seed = a.common.seed;
  const auto ds = load_data(run, a.data);
  std::vector<std::size_t> layers = a.layers;
  if (layers.empty())
    for (std::size_t l = 1; l <= ds.layers; ++l) layers.push_back(l);
  for (auto l : layers)
    if (l < 1 || l > ds.layers) fail(ErrorKind::Usage, "layer " + std::to_string(l) + " outside [1, L]");
  run.config = {{"layers", layers}, {"center", true}};

  std::ostringstream summary;
  summary << "layer,ratio1,ratio2\n";
  for (auto l : layers) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.hidden));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto row = ds.records[i].tensor.row(l - 1);
      for (std::size_t j = 0; j < ds.hidden; ++j)
        X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    const auto pca = pca_2d(X);
    std::ostringstream csv;
    csv << "x,y,label\n";
    for (std::size_t i = 0; i < ds.size(); ++i)
      csv << fmt(pca.projections(static_cast<Eigen::Index>(i), 0)) << ','
          << fmt(pca.projections(static_cast<Eigen::Index>(i), 1)) << ',' << ds.records[i].label << '\n';
    run.write("pca_layer" + std::to_string(l) + ".csv", csv.str());
    summary << l << ',' << fmt(pca.explained_variance_ratio[0]) << ',' << fmt(pca.explained_variance_ratio[1]) << '\n';
  }
  run.write("pca_summary.csv", summary.str());
  run.finish();
}

struct LayersArgs {
  CommonArgs common;
  std::string probe;
  double sigma = 1.0;
};

void cmd_layers(const LayersArgs& a) {
  if (!(a.sigma > 0)) fail(ErrorKind::Usage, "--sigma must be positive");
  Run run("layers", a.common.out);
  run.seed = a.common.seed;
  run.config = {{"sigma", a.sigma}};
  const auto probe = load_probe_file(run, a.probe);
  const auto rep = layer_weight_report(probe, a.sigma);
  run.write("layer_weights.csv", to_csv(rep));
  run.write_json("layer_summary.json", {{"variant", to_string(variant_of(probe))},
                                        {"sigma", rep.sigma},
                                        {"argmax_layer", rep.argmax_layer},
                                        {"smoothed_argmax_layer", rep.smoothed_argmax_layer},
                                        {"weights", rep.raw}});
  run.finish();
}

struct BiasArgs {
  CommonArgs common;
  std::string data;
  std::size_t folds = 5;
  std::size_t top = 20;
};

void cmd_bias(const BiasArgs& a) {
  Run run("bias", a.common.out);
  run.seed = a.common.seed;
  const TfidfOptions opt;
  run.config = {{"folds", a.folds}, {"top", a.top},           {"ngram_min", opt.min_n},
                {"ngram_max", opt.max_n}, {"max_features", opt.max_features}, {"C", 1.0}, {"max_iter", 1000}};
  const auto examples = read_bias_examples(a.data);
  run.input(a.data);
  const auto rep = cross_validate_bias(examples, a.folds, a.common.seed, opt, thread_cap(), a.top);
  run.write_json("bias_report.json", to_json(rep));
  run.finish();
}

struct MismatchArgs {
  CommonArgs common;
  std::string data, probe, observations;
  std::vector<std::uint64_t> table;
  double threshold = 0.5;
};

std::vector<MismatchObservation> read_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  std::vector<MismatchObservation> out;
  std::string line;
  std::size_t lineno = 0;
  auto source = [](const json& v) {
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "parametric") return kParametric;
      if (s == "contextual") return kContextual;
      fail(ErrorKind::Validation, "unknown source '" + s + "'");
    }
    const int i = v.get<int>();
    if (i != kParametric && i != kContextual) fail(ErrorKind::Validation, "source must be 0 or 1");
    return i;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      MismatchObservation o;
      o.required = source(j.at("required")) == kParametric ? SourceRequired::Parametric : SourceRequired::Contextual;
      o.predicted = source(j.at("predicted"));
      o.correct = j.at("correct").get<bool>();
      out.push_back(o);
    } catch (const json::exception& e) {
      fail(ErrorKind::Validation, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void cmd_mismatch(const MismatchArgs& a) {
  const int modes = (!a.table.empty()) + (!a.observations.empty()) + (!a.data.empty() || !a.probe.empty());
  if (modes != 1) fail(ErrorKind::Usage, "give exactly one of --table, --observations, or --data with --probe");
  Run run("mismatch", a.common.out);
  run.seed = a.common.seed;
  json reports = json::array();
  if (!a.table.empty()) {
    if (a.table.size() != 4) fail(ErrorKind::Usage, "--table takes four counts a,b,c,d");
    run.config = {{"mode", "table"}, {"table", a.table}};
    ConditionReport rep;
    rep.condition = "table";
    rep.table = {a.table[0], a.table[1], a.table[2], a.table[3]};
    rep.n = rep.table.total();
    rep.p_value = fisher_exact(rep.table);
    try {
      rep.relative_risk = relative_risk(rep.table);
    } catch (const Error& e) {
      rep.warnings.push_back(e.what());
    }
    reports.push_back(to_json(rep));
  } else {
    std::vector<MismatchObservation> obs;
    if (!a.observations.empty()) {
      run.config = {{"mode", "observations"}};
      obs = read_observations(a.observations);
      run.input(a.observations);
    } else {
      if (a.data.empty() || a.probe.empty()) fail(ErrorKind::Usage, "--data and --probe go together");
      run.config = {{"mode", "probe"}, {"threshold", a.threshold}};
      const auto probe = load_probe_file(run, a.probe);
      const auto ds = load_data(run, a.data);
      obs = mismatch_observations(ds, evaluate_probe(probe, ds, a.threshold).predictions);
    }
    for (const auto& rep : mismatch_analysis(obs)) reports.push_back(to_json(rep));
  }
  run.write_json("mismatch.json", {{"conditions", reports}});
  run.finish();
}

struct SynthArgs {
  CommonArgs common;
  DecoySpec spec;
  bool decoy = false;
};

void cmd_synth(const SynthArgs& a, const CLI::App& cmd) {
  DecoySpec spec = a.spec;
  spec.base.seed = a.common.seed;
  if (!a.decoy)
    for (const char* flag : {"--decoy-layer", "--decoy-separation", "--rho", "--test-n-per-class"})
      if (cmd.count(flag) > 0) fail(ErrorKind::Usage, std::string(flag) + " requires --decoy");
  Run run("synth", a.common.out);
  run.seed = spec.base.seed;
  if (a.decoy) {
    const auto data = generate_decoy(spec);
    run.config = ground_truth_json(spec, data);
    run.config.erase("direction");
    run.config.erase("decoy_direction");
    write_dataset(data.train, run.path("dataset.atrw"));
    write_dataset(data.test, run.path("decoy_test.atrw"));
    for (const char* f : {"dataset.atrw", "dataset.atrw.jsonl", "decoy_test.atrw", "decoy_test.atrw.jsonl"})
      run.record(f);
    run.write_json("ground_truth.json", ground_truth_json(spec, data));
  } else {
    const auto data = generate(spec.base);
    run.config = ground_truth_json(spec.base, data.direction);
    run.config.erase("direction");
    write_dataset(data.dataset, run.path("dataset.atrw"));
    for (const char* f : {"dataset.atrw", "dataset.atrw.jsonl"}) run.record(f);
    run.write_json("ground_truth.json", ground_truth_json(spec.base, data.direction));
  }
  run.finish();
}

struct GridArgs {
  CommonArgs common;
  std::string data, variant = "layer-lr";
  GridSpace space;
  TrainConfig base;
};

void cmd_grid(const GridArgs& a) {
  const auto variant = variant_arg(a.variant);
  if (variant == ProbeVariant::FinalLR) fail(ErrorKind::Usage, "grid search covers layer-lr and layer-mlp");
  TrainConfig base = TrainConfig::defaults(variant);
  base.seed = a.common.seed;
  base.batch_size = a.base.batch_size;
  base.patience = a.base.patience;
  base.val_fraction = a.base.val_fraction;
  base.validate();
  Run run("grid", a.common.out);
  run.seed = base.seed;
  run.config = {{"variant", to_string(variant)},
                {"dropout", a.space.dropout},
                {"weight_decay", a.space.weight_decay},
                {"learning_rate", a.space.learning_rate},
                {"epochs_per_config", a.space.epochs_per_config},
                {"batch_size", base.batch_size},
                {"patience", base.patience},
                {"val_fraction", base.val_fraction}};
  if (variant == ProbeVariant::LayerMLP) run.config["bottleneck_m"] = a.space.bottleneck_m;
  const auto ds = load_data(run, a.data);
  const auto outcome = grid_search(ds, a.space, base, thread_cap());

  json results = json::array();
  for (const auto& r : outcome.results) {
    json c = to_json(r.config);
    results.push_back({{"config", c},
                       {"val_macro_f1", r.val_macro_f1},
                       {"val_accuracy", r.val_accuracy},
                       {"best_epoch", r.best_epoch},
                       {"epochs_run", r.epochs_run}});
  }
  run.write_json("grid_results.json", {{"n_configs", outcome.results.size()},
                                       {"selection", "max val macro-F1, then val accuracy, then enumeration order"},
                                       {"best_index", outcome.best_index},
                                       {"best", results[outcome.best_index]},
                                       {"results", results}});
  run.finish();
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 2;
    case ErrorKind::Numeric:
    case ErrorKind::UndefinedRatio: return 4;
    default: return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-attribution probes over transformer hidden states"};
  app.set_config("--config", "", "TOML/INI file with flag values; command-line flags take precedence");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a probe");
  add_common(c_train, train.common);
  c_train->add_option("--data", train.data, "Activation dataset (.atrw)")->required();
  c_train->add_option("--variant", train.variant, "final-lr | layer-lr | layer-mlp")->capture_default_str();
  c_train->add_option("--lr", train.cfg.learning_rate, "AdamW learning rate (layer-mlp default 1e-3)")
      ->capture_default_str();
  c_train->add_option("--wd", train.cfg.weight_decay, "Decoupled weight decay")->capture_default_str();
  c_train->add_option("--dropout", train.cfg.dropout_p, "Dropout probability")->capture_default_str();
  c_train->add_option("--batch", train.cfg.batch_size, "Mini-batch size")->capture_default_str();
  c_train->add_option("--epochs", train.cfg.max_epochs, "Maximum epochs")->capture_default_str();
  c_train->add_option("--patience", train.cfg.patience, "Early-stopping patience")->capture_default_str();
  c_train->add_option("--m", train.cfg.bottleneck_m, "Layer-MLP bottleneck width")->capture_default_str();
  c_train->add_option("--val-fraction", train.cfg.val_fraction, "Title-disjoint validation fraction")
      ->capture_default_str();
  c_train->add_option("--test-fraction", train.test_fraction, "Title-disjoint held-out test fraction")
      ->capture_default_str();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Score a dataset with a trained probe");
  add_common(c_eval, eval.common);
  c_eval->add_option("--data", eval.data, "Activation dataset (.atrw)")->required();
  c_eval->add_option("--probe", eval.probe, "Probe file (.atrp)")->required();
  c_eval->add_option("--threshold", eval.threshold, "Decision threshold on P(parametric)")->capture_default_str();
  c_eval->add_option("--split", eval.split, "all | train | test (same split as train)")->capture_default_str();
  c_eval->add_option("--test-fraction", eval.test_fraction, "Held-out fraction used by train")->capture_default_str();

  PcaArgs pca;
  auto* c_pca = app.add_subcommand("pca", "Per-layer 2D PCA projections");
  add_common(c_pca, pca.common);
  c_pca->add_option("--data", pca.data, "Activation dataset (.atrw)")->required();
  c_pca->add_option("--layer", pca.layers, "1-based layers (default: all)");

  LayersArgs layers;
  auto* c_layers = app.add_subcommand("layers", "Layer-weight curve of a layer-weighted probe");
  add_common(c_layers, layers.common);
  c_layers->add_option("--probe", layers.probe, "Probe file (.atrp)")->required();
  c_layers->add_option("--sigma", layers.sigma, "Gaussian smoothing width in layers")->capture_default_str();

  BiasArgs bias;
  auto* c_bias = app.add_subcommand("bias", "Text-only lexical bias audit");
  add_common(c_bias, bias.common);
  c_bias->add_option("--data", bias.data, "JSON-lines examples {id, title, passage, label}")->required();
  c_bias->add_option("--folds", bias.folds, "Cross-validation folds")->capture_default_str();
  c_bias->add_option("--top", bias.top, "Unigrams reported per class")->capture_default_str();

  MismatchArgs mm;
  auto* c_mm = app.add_subcommand("mismatch", "Fisher exact test and relative risk of source mismatch");
  add_common(c_mm, mm.common);
  c_mm->add_option("--data", mm.data, "Annotated activation dataset (.atrw)");
  c_mm->add_option("--probe", mm.probe, "Probe file (.atrp)");
  c_mm->add_option("--threshold", mm.threshold, "Decision threshold")->capture_default_str();
  c_mm->add_option("--table", mm.table, "Counts a,b,c,d: rows [match, mismatch] x [correct, error]")->delimiter(',');
  c_mm->add_option("--observations", mm.observations, "JSON-lines {required, predicted, correct}");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic activation dataset");
  add_common(c_synth, synth.common);
  auto& sb = synth.spec.base;
  c_synth->add_option("--layers", sb.layers, "L")->capture_default_str();
  c_synth->add_option("--hidden", sb.hidden, "H")->capture_default_str();
  c_synth->add_option("--planted-layer", sb.planted_layer, "1-based planted layer")->capture_default_str();
  c_synth->add_option("--separation", sb.separation, "Signal separation mu")->capture_default_str();
  c_synth->add_option("--noise", sb.noise_scale, "Gaussian noise scale")->capture_default_str();
  c_synth->add_option("--n-per-class", sb.n_per_class, "Records per class")->capture_default_str();
  c_synth->add_option("--titles", sb.title_count, "Distinct titles")->capture_default_str();
  c_synth->add_option("--model-id", sb.model_id, "Model identifier")->capture_default_str();
  c_synth->add_flag("--decoy", synth.decoy, "Add a label-correlated decoy and a decorrelated test set");
  c_synth->add_option("--decoy-layer", synth.spec.decoy_layer, "1-based decoy layer")->capture_default_str();
  c_synth->add_option("--decoy-separation", synth.spec.decoy_separation, "Decoy separation")->capture_default_str();
  c_synth->add_option("--rho", synth.spec.rho, "P(decoy agrees with label) in training data")->capture_default_str();
  c_synth->add_option("--test-n-per-class", synth.spec.test_n_per_class, "Decoy test records per class")
      ->capture_default_str();

  GridArgs grid;
  auto* c_grid = app.add_subcommand("grid", "Hyperparameter grid search");
  add_common(c_grid, grid.common);
  c_grid->add_option("--data", grid.data, "Activation dataset (.atrw)")->required();
  c_grid->add_option("--variant", grid.variant, "layer-lr | layer-mlp")->capture_default_str();
  c_grid->add_option("--epochs-per-config", grid.space.epochs_per_config, "Epoch budget per configuration")
      ->capture_default_str();
  c_grid->add_option("--batch", grid.base.batch_size, "Mini-batch size")->capture_default_str();
  c_grid->add_option("--patience", grid.base.patience, "Early-stopping patience")->capture_default_str();
  c_grid->add_option("--val-fraction", grid.base.val_fraction, "Title-disjoint validation fraction")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_train) cmd_train(train, *c_train);
    else if (*c_eval) cmd_eval(eval);
    else if (*c_pca) cmd_pca(pca);
    else if (*c_layers) cmd_layers(layers);
    else if (*c_bias) cmd_bias(bias);
    else if (*c_mm) cmd_mismatch(mm);
    else if (*c_synth) cmd_synth(synth, *c_synth);
    else if (*c_grid) cmd_grid(grid);
  } catch (const Error& e) {
    std::cerr << "attriprobe: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "attriprobe: io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "attriprobe: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

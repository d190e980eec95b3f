#pragma once

// Lexical-bias audit: if passage text alone predicts the source label, the
// dataset carries a shortcut that a hidden-state probe could exploit.
//
// Features are TF-IDF over word unigrams and bigrams:
//   tokens = lowercase, split on non-alphanumeric bytes, drop 1-byte tokens
//   tf     = raw count
//   idf    = ln((1 + N) / (1 + df)) + 1
//   rows   l2-normalized
// The classifier is balanced L2 logistic regression evaluated with stratified
// k-fold cross-validation; the vocabulary is refit inside every fold.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attriprobe/logistic.hpp"
#include "attriprobe/metrics.hpp"
#include "attriprobe/parallel.hpp"
#include "attriprobe/rng.hpp"
#include "json.hpp"

namespace attriprobe {

struct BiasExample {
  std::string id;
  std::string title;
  std::string passage;
  int label = kContextual;
};

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() > 1) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    // Non-ASCII bytes are kept as word characters so UTF-8 words stay whole.
    if (std::isalnum(u) || u >= 0x80)
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    else
      flush();
  }
  flush();
  return out;
}

struct TfidfOptions {
  std::size_t min_n = 1;
  std::size_t max_n = 2;
  std::size_t max_features = 5000;
};

inline std::vector<std::string> extract_terms(std::string_view text, const TfidfOptions& opt) {
  const auto tokens = tokenize(text);
  std::vector<std::string> terms;
  for (std::size_t n = opt.min_n; n <= opt.max_n; ++n)
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string t = tokens[i];
      for (std::size_t k = 1; k < n; ++k) t += ' ' + tokens[i + k];
      terms.push_back(std::move(t));
    }
  return terms;
}

struct TfidfVocabulary {
  TfidfOptions options;
  std::vector<std::string> terms;  // lexicographic order
  std::vector<std::size_t> doc_freq;
  std::vector<double> idf;
  std::size_t n_docs = 0;
  std::unordered_map<std::string, std::uint32_t> index;
};

/// Keeps the max_features most frequent terms (corpus count, ties lexicographic).
inline TfidfVocabulary fit_vocabulary(std::span<const std::string> docs, const TfidfOptions& opt = {}) {
  if (docs.empty()) fail(ErrorKind::InsufficientData, "cannot fit a vocabulary on an empty corpus");
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // term -> (count, df)
  for (const auto& d : docs) {
    auto terms = extract_terms(d, opt);
    for (const auto& t : terms) ++counts[t].first;
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (const auto& t : terms) ++counts[t].second;
  }
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second.first > y.second.first; });
  if (ranked.size() > opt.max_features) ranked.resize(opt.max_features);
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  TfidfVocabulary v;
  v.options = opt;
  v.n_docs = docs.size();
  for (const auto& [term, c] : ranked) {
    v.index.emplace(term, static_cast<std::uint32_t>(v.terms.size()));
    v.terms.push_back(term);
    v.doc_freq.push_back(c.second);
    v.idf.push_back(std::log((1.0 + static_cast<double>(v.n_docs)) / (1.0 + static_cast<double>(c.second))) + 1.0);
  }
  return v;
}

/// TF-IDF rows for `docs` under `vocab`; out-of-vocabulary terms are dropped.
inline SparseDesign tfidf_features(std::span<const std::string> docs, const TfidfVocabulary& vocab) {
  SparseDesign X;
  X.n_cols = vocab.terms.size();
  X.row_data.reserve(docs.size());
  for (const auto& d : docs) {
    std::map<std::uint32_t, double> tf;
    for (const auto& t : extract_terms(d, vocab.options))
      if (auto it = vocab.index.find(t); it != vocab.index.end()) tf[it->second] += 1.0;
    SparseRow row;
    double sq = 0.0;
    for (const auto& [j, c] : tf) {
      row.index.push_back(j);
      row.value.push_back(c * vocab.idf[j]);
      sq += row.value.back() * row.value.back();
    }
    if (sq > 0)
      for (auto& v : row.value) v /= std::sqrt(sq);
    X.row_data.push_back(std::move(row));
  }
  return X;
}

inline SparseDesign tfidf_features(std::span<const std::string> docs, const TfidfOptions& opt = {}) {
  return tfidf_features(docs, fit_vocabulary(docs, opt));
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Fold id per example; each class is shuffled and dealt round-robin.
inline std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::Fold, "need at least 2 folds");
  std::vector<std::size_t> fold(labels.size(), 0);
  Rng rng(derive_seed(seed, 0xf01d));
  for (int c : {kContextual, kParametric}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    if (idx.size() < k)
      fail(ErrorKind::Fold, "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                " examples, fewer than " + std::to_string(k) + " folds");
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = i % k;
  }
  return fold;
}

struct BiasClassifier {
  TfidfVocabulary vocab;
  LogisticFit fit;

  int predict(const std::string& passage) const {
    const std::string docs[] = {passage};
    const auto X = tfidf_features(docs, vocab);
    return sigmoid(X.row_data[0].dot(fit.w) + fit.b) >= 0.5 ? kParametric : kContextual;
  }
};

inline BiasClassifier fit_bias_classifier(std::span<const BiasExample> train, const TfidfOptions& opt = {}) {
  std::vector<std::string> docs;
  std::vector<int> labels;
  for (const auto& e : train) {
    docs.push_back(e.passage);
    labels.push_back(e.label);
  }
  BiasClassifier clf;
  clf.vocab = fit_vocabulary(docs, opt);
  const auto X = tfidf_features(docs, clf.vocab);
  const auto [w_neg, w_pos] = balanced_class_weights(labels);
  std::vector<double> s(labels.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = labels[i] == kParametric ? w_pos : w_neg;
  clf.fit = fit_logistic(X, labels, s, LogisticOptions{});
  return clf;
}

/// Fits on `train` only and scores `test`.
inline Metrics evaluate_bias_fold(std::span<const BiasExample> train, std::span<const BiasExample> test,
                                  const TfidfOptions& opt = {}) {
  const auto clf = fit_bias_classifier(train, opt);
  std::vector<std::string> docs;
  std::vector<int> labels, preds;
  for (const auto& e : test) {
    docs.push_back(e.passage);
    labels.push_back(e.label);
  }
  const auto X = tfidf_features(docs, clf.vocab);
  for (const auto& row : X.row_data)
    preds.push_back(sigmoid(row.dot(clf.fit.w) + clf.fit.b) >= 0.5 ? kParametric : kContextual);
  return compute_metrics(preds, labels);
}

struct TermWeight {
  std::string term;
  double coefficient = 0.0;
};

struct BiasReport {
  std::size_t k = 5;
  std::uint64_t seed = 42;
  std::vector<double> fold_f1;        // binary F1 of the parametric class
  std::vector<double> fold_macro_f1;
  double mean_f1 = 0.0;
  double mean_macro_f1 = 0.0;
  std::vector<TermWeight> top_parametric;  // largest coefficients
  std::vector<TermWeight> top_contextual;  // most negative coefficients
};

inline BiasReport cross_validate_bias(std::span<const BiasExample> examples, std::size_t k = 5, std::uint64_t seed = 42,
                                      const TfidfOptions& opt = {}, std::size_t threads = 1, std::size_t top_n = 20) {
  for (const auto& e : examples)
    if (e.passage.empty()) fail(ErrorKind::Validation, "example '" + e.id + "' has an empty passage");
  std::vector<int> labels;
  for (const auto& e : examples) labels.push_back(e.label);
  const auto fold = stratified_folds(labels, k, seed);

  BiasReport rep;
  rep.k = k;
  rep.seed = seed;
  std::vector<Metrics> metrics(k);
  parallel_for(k, threads, [&](std::size_t f) {
    std::vector<BiasExample> train, test;
    for (std::size_t i = 0; i < examples.size(); ++i) (fold[i] == f ? test : train).push_back(examples[i]);
    metrics[f] = evaluate_bias_fold(train, test, opt);
  });
  for (const auto& m : metrics) {
    rep.fold_f1.push_back(m.per_class[kParametric].f1);
    rep.fold_macro_f1.push_back(m.macro_f1);
  }
  for (std::size_t f = 0; f < k; ++f) {
    rep.mean_f1 += rep.fold_f1[f] / static_cast<double>(k);
    rep.mean_macro_f1 += rep.fold_macro_f1[f] / static_cast<double>(k);
  }

  const auto full = fit_bias_classifier(examples, opt);
  std::vector<TermWeight> unigrams;
  for (std::size_t j = 0; j < full.vocab.terms.size(); ++j)
    if (full.vocab.terms[j].find(' ') == std::string::npos) unigrams.push_back({full.vocab.terms[j], full.fit.w[j]});
  auto take = [&](auto better) {
    auto sorted = unigrams;
    std::stable_sort(sorted.begin(), sorted.end(), better);
    if (sorted.size() > top_n) sorted.resize(top_n);
    return sorted;
  };
  rep.top_parametric = take([](const TermWeight& a, const TermWeight& b) { return a.coefficient > b.coefficient; });
  rep.top_contextual = take([](const TermWeight& a, const TermWeight& b) { return a.coefficient < b.coefficient; });
  return rep;
}

inline nlohmann::json to_json(const BiasReport& r) {
  auto terms = [](const std::vector<TermWeight>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& t : v) a.push_back({{"term", t.term}, {"coefficient", t.coefficient}});
    return a;
  };
  return {{"folds", r.k},
          {"seed", r.seed},
          {"stratified", true},
          {"f1_class", "parametric (binary F1)"},
          {"fold_f1", r.fold_f1},
          {"fold_macro_f1", r.fold_macro_f1},
          {"mean_f1", r.mean_f1},
          {"mean_macro_f1", r.mean_macro_f1},
          {"top_unigrams", {{"parametric", terms(r.top_parametric)}, {"contextual", terms(r.top_contextual)}}}};
}

/// Reads one JSON object per line: {"id", "title", "passage", "label"}.
inline std::vector<BiasExample> read_bias_examples(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  std::vector<BiasExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      BiasExample e;
      e.id = j.value("id", std::to_string(lineno));
      e.title = j.value("title", "");
      e.passage = j.at("passage").get<std::string>();
      const auto& lab = j.at("label");
      if (lab.is_string())
        e.label = lab.get<std::string>() == "parametric" ? kParametric : kContextual;
      else
        e.label = lab.get<int>();
      if (e.label != kParametric && e.label != kContextual) fail(ErrorKind::Validation, "label must be 0 or 1");
      if (e.passage.empty()) fail(ErrorKind::Validation, "empty passage");
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorKind::Format, path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace attriprobe

#pragma once

// Mismatch statistics: two-sided Fisher exact test and relative risk on a
// 2x2 table of source alignment x answer correctness.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attriprobe/activation_store.hpp"
#include "attriprobe/error.hpp"
#include "json.hpp"

namespace attriprobe {

/// Rows: source alignment (match, mismatch). Columns: answer (correct, error).
///
///              correct  error
///   match         a       b
///   mismatch      c       d
struct ContingencyTable {
  std::uint64_t a = 0, b = 0, c = 0, d = 0;

  std::uint64_t total() const { return a + b + c + d; }
  bool operator==(const ContingencyTable&) const = default;
};

/// Two-sided p-value: total probability of all tables with the observed margins
/// whose point probability does not exceed the observed one (1e-12 relative slack).
inline double fisher_exact(const ContingencyTable& t) {
  const std::uint64_t r1 = t.a + t.b, r2 = t.c + t.d, c1 = t.a + t.c, c2 = t.b + t.d;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) return 1.0;

  // Table is determined by x = top-left cell.
  const std::uint64_t lo = c1 > r2 ? c1 - r2 : 0;
  const std::uint64_t hi = std::min(r1, c1);
  std::vector<double> logw(hi - lo + 1, 0.0);
  for (std::uint64_t x = lo; x < hi; ++x) {
    const double num = static_cast<double>(r1 - x) * static_cast<double>(c1 - x);
    const double den = static_cast<double>(x + 1) * static_cast<double>(r2 - c1 + x + 1);
    logw[x - lo + 1] = logw[x - lo] + std::log(num / den);
  }
  const double peak = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (auto& v : logw) total += v = std::exp(v - peak);

  const double observed = logw[t.a - lo] * (1.0 + 1e-12);
  double tail = 0.0;
  for (double v : logw)
    if (v <= observed) tail += v;
  return std::min(1.0, tail / total);
}

/// Error rate of the mismatch row over the error rate of the match row.
inline double relative_risk(const ContingencyTable& t) {
  if (t.a + t.b == 0 || t.c + t.d == 0) fail(ErrorKind::UndefinedRatio, "relative risk needs both rows non-empty");
  const double match_risk = static_cast<double>(t.b) / static_cast<double>(t.a + t.b);
  const double mismatch_risk = static_cast<double>(t.d) / static_cast<double>(t.c + t.d);
  if (match_risk == 0.0) fail(ErrorKind::UndefinedRatio, "match row has zero error rate");
  return mismatch_risk / match_risk;
}

struct MismatchObservation {
  SourceRequired required = SourceRequired::Parametric;
  int predicted = kParametric;  // probe attribution
  bool correct = true;

  bool aligned() const {
    return (required == SourceRequired::Parametric) == (predicted == kParametric);
  }
};

struct ConditionReport {
  std::string condition;
  std::size_t n = 0;
  ContingencyTable table;
  std::optional<double> p_value;
  std::optional<double> relative_risk;
  std::vector<std::string> warnings;
};

/// One table per required source: (i) parametric-required, (ii) contextual-required.
inline std::vector<ConditionReport> mismatch_analysis(std::span<const MismatchObservation> obs) {
  std::vector<ConditionReport> out;
  for (auto req : {SourceRequired::Parametric, SourceRequired::Contextual}) {
    ConditionReport rep;
    rep.condition = std::string(to_string(req)) + "-required";
    for (const auto& o : obs) {
      if (o.required != req) continue;
      ++rep.n;
      if (o.aligned())
        ++(o.correct ? rep.table.a : rep.table.b);
      else
        ++(o.correct ? rep.table.c : rep.table.d);
    }
    if (rep.n == 0) {
      rep.warnings.push_back("no observations for this condition; skipped");
    } else {
      rep.p_value = fisher_exact(rep.table);
      try {
        rep.relative_risk = relative_risk(rep.table);
      } catch (const Error& e) {
        rep.warnings.push_back(e.what());
      }
    }
    out.push_back(std::move(rep));
  }
  return out;
}

inline nlohmann::json to_json(const ContingencyTable& t) { return {{t.a, t.b}, {t.c, t.d}}; }

inline nlohmann::json to_json(const ConditionReport& r) {
  nlohmann::json j;
  j["condition"] = r.condition;
  j["n"] = r.n;
  j["table"] = to_json(r.table);
  j["table_layout"] = "rows [match, mismatch] x columns [correct, error]";
  j["test"] = "fisher-exact, two-sided (point-probability method)";
  j["p_value"] = r.p_value ? nlohmann::json(*r.p_value) : nlohmann::json(nullptr);
  j["relative_risk"] = r.relative_risk ? nlohmann::json(*r.relative_risk) : nlohmann::json(nullptr);
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace attriprobe

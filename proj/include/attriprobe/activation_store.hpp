#pragma once

// Activation interchange container ("ATRW").
//
// Layout, all integers and floats little-endian:
//
//   magic      4 bytes  "ATRW"
//   version    u32      (currently 1)
//   layers     u32      L >= 1
//   hidden     u32      H >= 1
//   count      u64      N
//   model_id   u32 length + bytes
//   N records:
//     id              u32 length + bytes
//     title           u32 length + bytes
//     label           u8   0 = contextual, 1 = parametric
//     token_tag       u8   0 = FTG, 1 = LTE
//     correct         u8   0 / 1, 0xFF = absent
//     source_required u8   0 = parametric, 1 = contextual, 0xFF = absent
//     tensor          L*H f32, row-major (layer, hidden)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attriprobe/binary_io.hpp"
#include "attriprobe/error.hpp"
#include "attriprobe/rng.hpp"
#include "json.hpp"

namespace attriprobe {

inline constexpr std::array<char, 4> kDatasetMagic = {'A', 'T', 'R', 'W'};
inline constexpr std::uint32_t kDatasetVersion = 1;

enum class TokenTag : std::uint8_t { FTG = 0, LTE = 1 };
enum class SourceRequired : std::uint8_t { Parametric = 0, Contextual = 1 };

inline constexpr int kContextual = 0;
inline constexpr int kParametric = 1;

inline const char* to_string(TokenTag t) { return t == TokenTag::FTG ? "FTG" : "LTE"; }
inline const char* to_string(SourceRequired s) {
  return s == SourceRequired::Parametric ? "parametric" : "contextual";
}

/// Dense L x H activation matrix for one token position.
struct LayerTensor {
  std::size_t layers = 0;
  std::size_t hidden = 0;
  std::vector<float> data;  // row-major

  LayerTensor() = default;
  LayerTensor(std::size_t l, std::size_t h) : layers(l), hidden(h), data(l * h, 0.0f) {}

  std::span<float> row(std::size_t layer) { return {data.data() + layer * hidden, hidden}; }
  std::span<const float> row(std::size_t layer) const { return {data.data() + layer * hidden, hidden}; }

  bool operator==(const LayerTensor&) const = default;
};

struct ActivationRecord {
  std::string id;
  int label = kContextual;
  std::string title;
  TokenTag token_tag = TokenTag::FTG;
  LayerTensor tensor;
  std::optional<bool> correct;
  std::optional<SourceRequired> source_required;
  std::string model_id;

  bool operator==(const ActivationRecord&) const = default;
};

struct DatasetHeader {
  std::array<char, 4> magic = kDatasetMagic;
  std::uint32_t version = kDatasetVersion;
  std::uint32_t layers = 0;
  std::uint32_t hidden = 0;
  std::uint64_t count = 0;
  std::string model_id;

  bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
  std::string model_id;
  std::size_t layers = 1;
  std::size_t hidden = 1;
  std::vector<ActivationRecord> records;

  DatasetHeader header() const {
    DatasetHeader h;
    h.layers = static_cast<std::uint32_t>(layers);
    h.hidden = static_cast<std::uint32_t>(hidden);
    h.count = records.size();
    h.model_id = model_id;
    return h;
  }

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  bool operator==(const Dataset&) const = default;
};

/// Builds a dataset from records that must agree on (L, H, model_id).
inline Dataset make_dataset(std::vector<ActivationRecord> records) {
  Dataset ds;
  if (!records.empty()) {
    ds.layers = records.front().tensor.layers;
    ds.hidden = records.front().tensor.hidden;
    ds.model_id = records.front().model_id;
  }
  for (const auto& r : records) {
    if (r.tensor.layers != ds.layers || r.tensor.hidden != ds.hidden)
      fail(ErrorKind::DimensionMismatch,
           "record '" + r.id + "' has shape " + std::to_string(r.tensor.layers) + "x" +
               std::to_string(r.tensor.hidden) + ", expected " + std::to_string(ds.layers) + "x" +
               std::to_string(ds.hidden));
    if (r.model_id != ds.model_id)
      fail(ErrorKind::DimensionMismatch, "record '" + r.id + "' has model_id '" + r.model_id + "'");
  }
  ds.records = std::move(records);
  return ds;
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out{ds.model_id, ds.layers, ds.hidden, {}};
  out.records.reserve(indices.size());
  for (auto i : indices) out.records.push_back(ds.records.at(i));
  return out;
}

namespace detail {

inline void validate_record(const ActivationRecord& r, std::size_t layers, std::size_t hidden) {
  if (r.tensor.layers != layers || r.tensor.hidden != hidden || r.tensor.data.size() != layers * hidden)
    fail(ErrorKind::DimensionMismatch, "record '" + r.id + "' does not match dataset shape");
  if (r.label != kContextual && r.label != kParametric)
    fail(ErrorKind::Validation, "record '" + r.id + "' has label " + std::to_string(r.label));
  for (float v : r.tensor.data)
    if (!std::isfinite(v)) fail(ErrorKind::Validation, "record '" + r.id + "' contains a non-finite value");
}

inline nlohmann::json sidecar_line(const ActivationRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["title"] = r.title;
  j["label"] = r.label;
  j["token_tag"] = to_string(r.token_tag);
  j["correct"] = r.correct ? nlohmann::json(*r.correct) : nlohmann::json(nullptr);
  j["source_required"] =
      r.source_required ? nlohmann::json(to_string(*r.source_required)) : nlohmann::json(nullptr);
  return j;
}

}  // namespace detail

inline std::string sidecar_path(const std::string& path) { return path + ".jsonl"; }

/// Serializes `ds` to `path` and writes the JSON-lines sidecar next to it.
inline void write_dataset(const Dataset& ds, const std::string& path) {
  if (ds.layers < 1 || ds.hidden < 1) fail(ErrorKind::DimensionMismatch, "dataset needs L >= 1 and H >= 1");
  for (const auto& r : ds.records) {
    detail::validate_record(r, ds.layers, ds.hidden);
    if (r.model_id != ds.model_id)
      fail(ErrorKind::DimensionMismatch, "record '" + r.id + "' has model_id '" + r.model_id + "'");
  }

  detail::ByteWriter w;
  w.raw({kDatasetMagic.data(), kDatasetMagic.size()});
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.layers));
  w.u32(static_cast<std::uint32_t>(ds.hidden));
  w.u64(ds.records.size());
  w.str(ds.model_id);
  for (const auto& r : ds.records) {
    w.str(r.id);
    w.str(r.title);
    w.u8(static_cast<std::uint8_t>(r.label));
    w.u8(static_cast<std::uint8_t>(r.token_tag));
    w.u8(r.correct ? static_cast<std::uint8_t>(*r.correct) : 0xFF);
    w.u8(r.source_required ? static_cast<std::uint8_t>(*r.source_required) : 0xFF);
    for (float v : r.tensor.data) w.f32(v);
  }
  w.save(path);

  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) fail(ErrorKind::Io, "cannot write sidecar for '" + path + "'");
  for (const auto& r : ds.records) side << detail::sidecar_line(r).dump() << '\n';
}

inline void write_dataset(std::vector<ActivationRecord> records, const std::string& path) {
  write_dataset(make_dataset(std::move(records)), path);
}

inline Dataset read_dataset(const std::string& path) {
  auto in = detail::ByteReader::from_file(path);
  if (in.size() < 4 || in.raw(4) != std::string(kDatasetMagic.data(), 4))
    fail(ErrorKind::Format, "'" + path + "' is not an ATRW file");
  const auto version = in.u32();
  if (version != kDatasetVersion) fail(ErrorKind::Format, "unsupported ATRW version " + std::to_string(version));

  Dataset ds;
  ds.layers = in.u32();
  ds.hidden = in.u32();
  const auto count = in.u64();
  ds.model_id = in.str();
  if (ds.layers < 1 || ds.hidden < 1) fail(ErrorKind::Format, "header declares an empty tensor shape");

  const std::size_t floats = ds.layers * ds.hidden;
  // Each record needs at least the fixed fields plus its tensor.
  if (count > in.remaining() / (12 + 4 * floats)) fail(ErrorKind::Corruption, "record count exceeds payload");
  ds.records.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    ActivationRecord r;
    r.id = in.str();
    r.title = in.str();
    r.label = in.u8();
    const auto tag = in.u8();
    if (tag > 1) fail(ErrorKind::Validation, "record '" + r.id + "' has token tag " + std::to_string(tag));
    r.token_tag = static_cast<TokenTag>(tag);
    const auto correct = in.u8();
    if (correct == 0 || correct == 1) {
      r.correct = correct == 1;
    } else if (correct != 0xFF) {
      fail(ErrorKind::Validation, "record '" + r.id + "' has bad correctness byte");
    }
    const auto source = in.u8();
    if (source == 0 || source == 1) {
      r.source_required = static_cast<SourceRequired>(source);
    } else if (source != 0xFF) {
      fail(ErrorKind::Validation, "record '" + r.id + "' has bad source_required byte");
    }
    in.need(4 * floats);
    r.tensor = LayerTensor(ds.layers, ds.hidden);
    for (auto& v : r.tensor.data) v = in.f32();
    r.model_id = ds.model_id;
    detail::validate_record(r, ds.layers, ds.hidden);
    ds.records.push_back(std::move(r));
  }
  if (in.remaining() != 0) fail(ErrorKind::Corruption, "trailing bytes after last record");
  return ds;
}

// ---------------------------------------------------------------------------
// Class statistics

struct ClassStats {
  std::size_t count_pos = 0;
  std::size_t count_neg = 0;
  double pos_weight = 1.0;  // count_neg / count_pos
};

inline ClassStats class_stats(std::span<const int> labels) {
  ClassStats s;
  for (int y : labels) (y == kParametric ? s.count_pos : s.count_neg)++;
  if (s.count_pos == 0 || s.count_neg == 0)
    fail(ErrorKind::DegenerateDataset, "both classes are required (pos=" + std::to_string(s.count_pos) +
                                           ", neg=" + std::to_string(s.count_neg) + ")");
  s.pos_weight = static_cast<double>(s.count_neg) / static_cast<double>(s.count_pos);
  return s;
}

inline std::vector<int> labels_of(const Dataset& ds) {
  std::vector<int> y;
  y.reserve(ds.size());
  for (const auto& r : ds.records) y.push_back(r.label);
  return y;
}

inline ClassStats class_stats(const Dataset& ds) {
  const auto y = labels_of(ds);
  return class_stats(std::span<const int>(y));
}

// ---------------------------------------------------------------------------
// Title-disjoint splitting

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

struct SplitAssignment {
  std::map<std::string, Split> by_title;
  std::array<double, 3> fractions{0.64, 0.16, 0.20};
  std::uint64_t seed = 42;

  Split of(const std::string& title) const { return by_title.at(title); }

  std::vector<std::size_t> indices(const Dataset& ds, Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (by_title.at(ds.records[i].title) == which) out.push_back(i);
    return out;
  }

  Dataset part(const Dataset& ds, Split which) const {
    const auto idx = indices(ds, which);
    return subset(ds, idx);
  }

  bool operator==(const SplitAssignment&) const = default;
};

/// Assigns whole titles to train/val/test.
///
/// The sorted title list is shuffled with `seed`; the two cut points are then
/// placed where cumulative record counts are closest to the target fractions.
/// On a tie the boundary title joins the earlier split.
inline SplitAssignment split_title_disjoint(const Dataset& ds, std::array<double, 3> fractions,
                                            std::uint64_t seed = 42) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) fail(ErrorKind::Usage, "split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::Usage, "split fractions must sum to 1");

  SplitAssignment out;
  out.fractions = fractions;
  out.seed = seed;
  if (ds.empty()) return out;

  std::map<std::string, std::size_t> counts;
  for (const auto& r : ds.records) ++counts[r.title];
  std::vector<std::string> titles;
  titles.reserve(counts.size());
  for (const auto& [t, _] : counts) titles.push_back(t);  // already sorted

  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(std::span<std::string>(titles));

  std::vector<std::size_t> cumulative(titles.size() + 1, 0);
  for (std::size_t i = 0; i < titles.size(); ++i) cumulative[i + 1] = cumulative[i] + counts[titles[i]];
  const double total = static_cast<double>(ds.size());

  auto nearest_cut = [&](std::size_t from, double target) {
    std::size_t best = from;
    double best_dev = std::abs(static_cast<double>(cumulative[from]) - target);
    for (std::size_t i = from + 1; i < cumulative.size(); ++i) {
      const double dev = std::abs(static_cast<double>(cumulative[i]) - target);
      if (dev <= best_dev) {
        best = i;
        best_dev = dev;
      }
    }
    return best;
  };
  const std::size_t cut_train = nearest_cut(0, fractions[0] * total);
  const std::size_t cut_val = nearest_cut(cut_train, (fractions[0] + fractions[1]) * total);

  for (std::size_t i = 0; i < titles.size(); ++i) {
    const Split s = i < cut_train ? Split::Train : (i < cut_val ? Split::Val : Split::Test);
    out.by_title.emplace(titles[i], s);
  }
  return out;
}

}  // namespace attriprobe

#pragma once

// Trained-probe container ("ATRP"), little-endian:
//
//   magic "ATRP" | version u32 | variant u8 | L u32 | H u32 | m u32
//   final-lr : w[H] b mean[H] std[H]
//   layer-lr : theta[L] w[H] b
//   layer-mlp: theta[L] W1[m*H] w2[m] b
//
// All parameter arrays are f64.

#include <array>
#include <string>

#include "attriprobe/binary_io.hpp"
#include "attriprobe/probes.hpp"

namespace attriprobe {

inline constexpr std::array<char, 4> kProbeMagic = {'A', 'T', 'R', 'P'};
inline constexpr std::uint32_t kProbeVersion = 1;

namespace detail {

inline void put(ByteWriter& w, std::span<const double> v) {
  for (double x : v) w.f64(x);
}

inline std::vector<double> take(ByteReader& r, std::size_t n) {
  r.need(8 * n);
  std::vector<double> v(n);
  for (auto& x : v) x = r.f64();
  return v;
}

}  // namespace detail

inline std::vector<char> encode_probe(const Probe& probe) {
  detail::ByteWriter w;
  w.raw({kProbeMagic.data(), kProbeMagic.size()});
  w.u32(kProbeVersion);
  w.u8(static_cast<std::uint8_t>(variant_of(probe)));
  w.u32(static_cast<std::uint32_t>(probe_layers(probe)));
  w.u32(static_cast<std::uint32_t>(probe_hidden(probe)));
  if (const auto* p = std::get_if<FinalLRParams>(&probe)) {
    w.u32(0);
    detail::put(w, p->w);
    w.f64(p->b);
    detail::put(w, p->scaler_mean);
    detail::put(w, p->scaler_std);
  } else if (const auto* p = std::get_if<LayerLRParams>(&probe)) {
    w.u32(0);
    detail::put(w, p->theta);
    detail::put(w, p->w);
    w.f64(p->b);
  } else {
    const auto& q = std::get<LayerMLPParams>(probe);
    w.u32(static_cast<std::uint32_t>(q.m));
    detail::put(w, q.theta);
    detail::put(w, q.W1);
    detail::put(w, q.w2);
    w.f64(q.b);
  }
  return w.bytes();
}

inline void save_probe(const Probe& probe, const std::string& path) {
  detail::ByteWriter w;
  const auto bytes = encode_probe(probe);
  w.raw({bytes.data(), bytes.size()});
  w.save(path);
}

inline Probe decode_probe(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  if (r.size() < 4 || r.raw(4) != std::string(kProbeMagic.data(), 4)) fail(ErrorKind::Format, "not an ATRP file");
  if (const auto v = r.u32(); v != kProbeVersion) fail(ErrorKind::Format, "unsupported ATRP version " + std::to_string(v));
  const auto tag = r.u8();
  const std::size_t L = r.u32(), H = r.u32(), m = r.u32();
  if (L < 1 || H < 1) fail(ErrorKind::Format, "probe declares an empty shape");

  Probe out;
  switch (tag) {
    case 0: {
      FinalLRParams p;
      p.layers = L;
      p.w = detail::take(r, H);
      p.b = r.f64();
      p.scaler_mean = detail::take(r, H);
      p.scaler_std = detail::take(r, H);
      out = std::move(p);
      break;
    }
    case 1: {
      LayerLRParams p;
      p.theta = detail::take(r, L);
      p.w = detail::take(r, H);
      p.b = r.f64();
      out = std::move(p);
      break;
    }
    case 2: {
      if (m < 1) fail(ErrorKind::Format, "layer-mlp probe with m = 0");
      LayerMLPParams p;
      p.m = m;
      p.theta = detail::take(r, L);
      p.W1 = detail::take(r, m * H);
      p.w2 = detail::take(r, m);
      p.b = r.f64();
      out = std::move(p);
      break;
    }
    default:
      fail(ErrorKind::Format, "unknown probe variant tag " + std::to_string(tag));
  }
  if (r.remaining() != 0) fail(ErrorKind::Corruption, "trailing bytes in probe file");
  return out;
}

inline Probe load_probe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open probe '" + path + "'");
  return decode_probe(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

}  // namespace attriprobe

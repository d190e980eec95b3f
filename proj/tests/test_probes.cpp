#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "attriprobe/probe_io.hpp"
#include "attriprobe/probes.hpp"
#include "oracles.hpp"

using namespace attriprobe;

namespace {

LayerTensor random_tensor(std::size_t L, std::size_t H, Rng& rng) {
  LayerTensor t(L, H);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

struct Fixture {
  std::vector<LayerTensor> xs;
  Batch batch;
};

Fixture random_batch(std::size_t n, std::size_t L, std::size_t H, std::size_t mask_width, bool dropout, Rng& rng) {
  Fixture f;
  for (std::size_t i = 0; i < n; ++i) f.xs.push_back(random_tensor(L, H, rng));
  for (std::size_t i = 0; i < n; ++i) {
    f.batch.inputs.push_back(&f.xs[i]);
    f.batch.labels.push_back(static_cast<int>(rng.uniform_index(2)));
    if (dropout) f.batch.masks.push_back(DropoutMask::sample(mask_width, 0.3, rng));
  }
  return f;
}

template <typename Params>
double check_gradient(Params p, const Batch& batch, double pos_weight) {
  const auto analytic = pack(backward(p, batch, pos_weight).grad);
  const auto numeric = oracle::central_difference(
      [&](const std::vector<double>& x) {
        Params q = p;
        unpack(x, q);
        return batch_loss(q, batch, pos_weight);
      },
      pack(p));
  return oracle::max_relative_error(analytic, numeric);
}

}  // namespace

// --- activations ------------------------------------------------------------

TEST(Normalize, UnitRowUnchangedAndPythagoreanRow) {
  LayerTensor t(3, 2);
  t.data = {0.6f, 0.8f, 3.0f, 4.0f, 0.0f, 0.0f};
  const auto n = l2_normalize_layers(t);
  EXPECT_NEAR(n.row(0)[0], 0.6, 1e-7);
  EXPECT_NEAR(n.row(0)[1], 0.8, 1e-7);
  EXPECT_DOUBLE_EQ(n.row(1)[0], 0.6);
  EXPECT_DOUBLE_EQ(n.row(1)[1], 0.8);
  EXPECT_EQ(n.row(2)[0], 0.0);
  EXPECT_EQ(n.row(2)[1], 0.0);
}

TEST(Softmax, ZeroIsUniformAndShiftInvariant) {
  for (double v : softmax(std::vector<double>(5, 0.0))) EXPECT_DOUBLE_EQ(v, 0.2);
  const std::vector<double> th{0.3, -1.2, 2.5, 0.0};
  auto shifted = th;
  for (auto& v : shifted) v += 123.4;
  const auto a = softmax(th), b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  const auto c = softmax(std::vector<double>{std::log(2.0), 0.0});
  EXPECT_NEAR(c[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(c[1], 1.0 / 3.0, 1e-15);
}

TEST(Sparsemax, WorkedExamples) {
  for (double v : sparsemax(std::vector<double>(4, 1.7))) EXPECT_DOUBLE_EQ(v, 0.25);
  const auto a = sparsemax(std::vector<double>{2.0, 0.0});
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(a[1], 0.0);
  const auto b = sparsemax(std::vector<double>{0.5, 0.0, 0.0});
  EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b[1], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(b[2], 1.0 / 6.0, 1e-15);
}

TEST(Sparsemax, MatchesSimplexProjectionOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto z = random_vector(1 + rng.uniform_index(8), rng, 1.5);
    const auto p = sparsemax(z);
    const auto q = oracle::simplex_projection(z);
    ASSERT_TRUE(oracle::simplex_kkt_holds(z, q));
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Sparsemax, BackwardMatchesFiniteDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto z = random_vector(2 + rng.uniform_index(6), rng);
    const auto g = random_vector(z.size(), rng);
    const auto analytic = sparsemax_backward(sparsemax(z), g);
    const auto numeric = oracle::central_difference(
        [&](const std::vector<double>& x) {
          const auto a = sparsemax(x);
          double s = 0;
          for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * g[i];
          return s;
        },
        z);
    EXPECT_LT(oracle::max_relative_error(analytic, numeric), 1e-6);
  }
}

TEST(Gelu, ValuesAndAsymptote) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(10.0), 10.0, 1e-9);
  EXPECT_NEAR(gelu(1.0), 0.841345, 1e-6);
  EXPECT_NEAR(gelu(-1.0), -0.158655, 1e-6);
  for (double x : {-3.0, -0.5, 0.2, 1.7}) {
    const double h = 1e-6;
    EXPECT_NEAR(gelu_grad(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-8);
  }
}

// --- forward passes --------------------------------------------------------

TEST(FinalLR, KnownProbabilitiesAndMonotone) {
  FinalLRParams p;
  p.layers = 2;
  p.w = {0.0, 0.0};
  p.scaler_mean = {0.0, 0.0};
  p.scaler_std = {1.0, 1.0};
  LayerTensor h(2, 2);
  h.data = {9, 9, 1, 2};
  EXPECT_DOUBLE_EQ(forward_final_lr(h, p), 0.5);
  p.b = std::log(3.0);
  EXPECT_NEAR(forward_final_lr(h, p), 0.75, 1e-15);
  p.b = 0;
  p.w = {1.0, 0.0};
  double prev = -1;
  for (float v : {-2.f, -1.f, 0.f, 1.f, 2.f}) {
    h.data[2] = v;
    const double q = forward_final_lr(h, p);
    EXPECT_GT(q, prev);
    prev = q;
  }
}

TEST(FinalLR, OnlyLastLayerMatters) {
  Rng rng(3);
  FinalLRParams p;
  p.layers = 3;
  p.w = random_vector(4, rng);
  p.b = 0.2;
  p.scaler_mean = random_vector(4, rng);
  p.scaler_std = {1.0, 2.0, 0.5, 1.5};
  auto h = random_tensor(3, 4, rng);
  const double a = forward_final_lr(h, p);
  for (std::size_t j = 0; j < 8; ++j) h.data[j] += 5.0f;
  EXPECT_DOUBLE_EQ(forward_final_lr(h, p), a);
}

TEST(LayerLR, DominantThetaSelectsLayer) {
  Rng rng(4);
  const std::size_t L = 5, H = 6, k = 3;
  LayerLRParams p;
  p.theta.assign(L, 0.0);
  p.theta[k] = 50.0;
  p.w = random_vector(H, rng);
  p.b = -0.3;
  const auto h = random_tensor(L, H, rng);
  const auto n = l2_normalize_layers(h);
  double expect = p.b;
  for (std::size_t j = 0; j < H; ++j) expect += p.w[j] * n.row(k)[j];
  EXPECT_NEAR(forward_layer_lr(h, p), expect, 1e-12);
}

TEST(LayerLR, IdenticalLayersGiveThatRow) {
  Rng rng(5);
  LayerLRParams p{random_vector(4, rng), random_vector(3, rng), 0.1};
  LayerTensor h(4, 3);
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t j = 0; j < 3; ++j) h.data[l * 3 + j] = static_cast<float>(j + 1);
  const double s = std::sqrt(14.0);
  const double expect = p.b + (p.w[0] * 1 + p.w[1] * 2 + p.w[2] * 3) / s;
  EXPECT_NEAR(forward_layer_lr(h, p), expect, 1e-12);
}

TEST(LayerLR, KeepAllMaskIsIdentity) {
  Rng rng(6);
  LayerLRParams p{random_vector(3, rng), random_vector(4, rng), 0.0};
  const auto h = random_tensor(3, 4, rng);
  DropoutMask m{std::vector<std::uint8_t>(4, 1), 1.0};
  EXPECT_DOUBLE_EQ(forward_layer_lr(h, p, &m), forward_layer_lr(h, p));
}

TEST(LayerMLP, ZeroFirstLayerGivesBias) {
  Rng rng(7);
  auto p = init_layer_mlp(3, 4, 5, 1);
  std::fill(p.W1.begin(), p.W1.end(), 0.0);
  p.b = 0.77;
  EXPECT_DOUBLE_EQ(forward_layer_mlp(random_tensor(3, 4, rng), p), 0.77);
}

TEST(LayerMLP, SingleSupportUsesThatLayer) {
  Rng rng(8);
  auto p = init_layer_mlp(4, 3, 2, 9);
  p.theta = {2.0, 0.0, 0.0, 0.0};
  ASSERT_EQ(sparsemax(p.theta)[0], 1.0);
  auto h = random_tensor(4, 3, rng);
  const double a = forward_layer_mlp(h, p);
  for (std::size_t j = 3; j < 12; ++j) h.data[j] = static_cast<float>(rng.normal());
  EXPECT_DOUBLE_EQ(forward_layer_mlp(h, p), a);
}

TEST(LayerMLP, ScalingARowDoesNotChangeOutput) {
  Rng rng(9);
  auto p = init_layer_mlp(3, 4, 3, 2);
  p.theta = {0.1, 0.4, -0.2};
  auto h = random_tensor(3, 4, rng);
  const double a = forward_layer_mlp(h, p);
  for (std::size_t j = 4; j < 8; ++j) h.data[j] *= 2.0f;
  EXPECT_NEAR(forward_layer_mlp(h, p), a, 1e-12);
}

TEST(Probe, AggregationWeightsUndefinedForFinalLR) {
  FinalLRParams p;
  p.layers = 1;
  p.w = {1.0};
  p.scaler_mean = {0.0};
  p.scaler_std = {1.0};
  try {
    aggregation_weights(Probe{p});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedVariant);
  }
}

TEST(Probe, ShapeMismatchIsRejected) {
  Rng rng(10);
  const auto p = init_layer_lr(3, 4, 1);
  EXPECT_THROW(forward_layer_lr(random_tensor(3, 5, rng), p), Error);
}

// --- loss and gradients ----------------------------------------------------

TEST(Loss, KnownValues) {
  const std::vector<double> z{0.0};
  EXPECT_NEAR(bce_logits_loss(z, std::vector<int>{0}, 1.0).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_logits_loss(z, std::vector<int>{1}, 2.0).loss, 2 * std::log(2.0), 1e-15);
  const auto big = bce_logits_loss(std::vector<double>{800.0, -800.0}, std::vector<int>{1, 0}, 1.0);
  EXPECT_TRUE(std::isfinite(big.loss));
  EXPECT_NEAR(big.loss, 0.0, 1e-300);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(6);
    const auto z = random_vector(n, rng, 3.0);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.uniform_index(2));
    const double pw = rng.uniform(0.2, 5.0);
    const auto numeric = oracle::central_difference(
        [&](const std::vector<double>& x) { return bce_logits_loss(x, y, pw).loss; }, z);
    EXPECT_LT(oracle::max_relative_error(bce_logits_loss(z, y, pw).grad, numeric), 1e-6);
  }
}

TEST(Backward, FinalLRMatchesFiniteDifferences) {
  Rng rng(14);
  FinalLRParams p;
  p.layers = 3;
  p.w = random_vector(5, rng);
  p.b = 0.3;
  p.scaler_mean = random_vector(5, rng);
  p.scaler_std = {1.0, 0.5, 2.0, 1.5, 0.8};
  const auto f = random_batch(8, 3, 5, 0, false, rng);
  EXPECT_LT(check_gradient(p, f.batch, 1.7), 1e-5);
}

TEST(Backward, LayerLRMatchesFiniteDifferences) {
  Rng rng(15);
  auto p = init_layer_lr(4, 6, 3);
  p.theta = random_vector(4, rng);
  p.b = -0.4;
  const auto f = random_batch(8, 4, 6, 6, true, rng);
  EXPECT_LT(check_gradient(p, f.batch, 0.6), 1e-5);
}

TEST(Backward, LayerMLPMatchesFiniteDifferences) {
  Rng rng(16);
  auto p = init_layer_mlp(5, 4, 3, 4);
  p.theta = random_vector(5, rng, 0.5);
  p.b = 0.1;
  const auto f = random_batch(8, 5, 4, 3, true, rng);
  EXPECT_LT(check_gradient(p, f.batch, 1.3), 1e-5);
}

TEST(Backward, ThetaOutsideSparsemaxSupportHasZeroGradient) {
  Rng rng(17);
  auto p = init_layer_mlp(4, 3, 2, 5);
  p.theta = {1.0, 0.9, -3.0, -4.0};
  const auto alpha = sparsemax(p.theta);
  ASSERT_EQ(alpha[2], 0.0);
  ASSERT_EQ(alpha[3], 0.0);
  const auto f = random_batch(8, 4, 3, 2, false, rng);
  const auto g = backward(p, f.batch, 1.0).grad;
  EXPECT_EQ(g.theta[2], 0.0);
  EXPECT_EQ(g.theta[3], 0.0);
}

TEST(Backward, GradientVanishesAfterTrainingOnSeparableBatch) {
  // Full-batch gradient descent on a tiny separable problem; with weight decay
  // absent the loss keeps shrinking, so the gradient norm goes to zero.
  Rng rng(18);
  const std::size_t L = 2, H = 3;
  std::vector<LayerTensor> xs;
  Batch batch;
  for (int i = 0; i < 8; ++i) {
    LayerTensor t(L, H);
    const float s = i % 2 ? 1.0f : -1.0f;
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < H; ++j) t.data[l * H + j] = s * (1.0f + static_cast<float>(j)) + 0.1f * static_cast<float>(rng.normal());
    xs.push_back(t);
  }
  for (int i = 0; i < 8; ++i) {
    batch.inputs.push_back(&xs[i]);
    batch.labels.push_back(i % 2);
  }
  auto p = init_layer_lr(L, H, 1);
  double gnorm = 0;
  for (int it = 0; it < 20000; ++it) {
    const auto pg = backward(p, batch, 1.0);
    auto flat = pack(p);
    const auto g = pack(pg.grad);
    gnorm = 0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      flat[i] -= 2.0 * g[i];
      gnorm += g[i] * g[i];
    }
    unpack(flat, p);
  }
  EXPECT_LT(std::sqrt(gnorm), 1e-4);
}

// --- serialization ---------------------------------------------------------

TEST(ProbeIO, RoundTripEveryVariant) {
  Rng rng(19);
  FinalLRParams f;
  f.layers = 3;
  f.w = random_vector(4, rng);
  f.b = 0.5;
  f.scaler_mean = random_vector(4, rng);
  f.scaler_std = {1, 2, 3, 4};
  auto lr = init_layer_lr(3, 4, 2);
  lr.theta = random_vector(3, rng);
  auto mlp = init_layer_mlp(3, 4, 5, 2);
  for (const Probe& p : {Probe{f}, Probe{lr}, Probe{mlp}}) {
    const auto bytes = encode_probe(p);
    EXPECT_EQ(decode_probe(bytes), p);
  }
}

TEST(ProbeIO, CorruptBytesAreRejected) {
  auto bytes = encode_probe(Probe{init_layer_lr(2, 2, 1)});
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_probe(truncated), Error);
  bytes[1] = 'Z';
  try {
    decode_probe(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
}

TEST(ProbeIO, MissingFileIsIoError) {
  try {
    load_probe("/nonexistent/probe.atrp");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

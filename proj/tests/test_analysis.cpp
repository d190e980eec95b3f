#include <gtest/gtest.h>

#include <algorithm>

#include "attriprobe/evaluate.hpp"
#include "attriprobe/layer_report.hpp"
#include "attriprobe/pca.hpp"
#include "attriprobe/stats.hpp"
#include "attriprobe/synth.hpp"
#include "attriprobe/training.hpp"
#include "oracles.hpp"

using namespace attriprobe;

// --- metrics ---------------------------------------------------------------

TEST(Metrics, PerfectPredictions) {
  const std::vector<int> y{0, 1, 1, 0, 1};
  const auto m = compute_metrics(y, y);
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
}

TEST(Metrics, AllNegativePredictions) {
  const auto m = compute_metrics(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_NEAR(m.macro_f1, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(m.confusion[1][0], 2u);
}

TEST(Metrics, SwappingEncodingsKeepsMacroF1AndMatchesCounting) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(40);
    std::vector<int> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.uniform_index(2));
      y[i] = static_cast<int>(rng.uniform_index(2));
    }
    auto ps = p, ys = y;
    for (auto& v : ps) v = 1 - v;
    for (auto& v : ys) v = 1 - v;
    const double a = compute_metrics(p, y).macro_f1;
    EXPECT_NEAR(a, compute_metrics(ps, ys).macro_f1, 1e-15);
    EXPECT_NEAR(a, oracle::macro_f1(p, y), 1e-15);
  }
}

// --- PCA -------------------------------------------------------------------

namespace {

void expect_matches_oracle(const Eigen::MatrixXd& X, PcaMethod method, double tol) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(X.rows()), std::vector<double>(X.cols()));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) rows[i][j] = X(i, j);
  auto eig = oracle::jacobi_eigen(oracle::covariance(rows));
  double total = 0;
  for (double v : eig.values) total += std::max(v, 0.0);
  const auto pca = pca_2d(X, true, method);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(pca.explained_variance_ratio[k], eig.values[k] / total, tol);
    oracle::canonical_sign(eig.vectors[k]);
    for (Eigen::Index j = 0; j < X.cols(); ++j) EXPECT_NEAR(pca.components(j, k), eig.vectors[k][j], tol);
  }
}

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index h, Rng& rng) {
  Eigen::MatrixXd X(n, h);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < h; ++j) X(i, j) = rng.normal() * static_cast<double>(j + 1);
  return X;
}

}  // namespace

TEST(Oracle, JacobiEigenpairsSatisfyDefinition) {
  Rng rng(32);
  const auto X = random_matrix(12, 5, rng);
  std::vector<std::vector<double>> rows(12, std::vector<double>(5));
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 5; ++j) rows[i][j] = X(i, j);
  const auto S = oracle::covariance(rows);
  const auto eig = oracle::jacobi_eigen(S);
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t i = 0; i < 5; ++i) {
      double Sv = 0;
      for (std::size_t j = 0; j < 5; ++j) Sv += S[i][j] * eig.vectors[k][j];
      EXPECT_NEAR(Sv, eig.values[k] * eig.vectors[k][i], 1e-12);
    }
}

TEST(Pca, FiveByFourMatchesEigendecomposition) {
  Rng rng(33);
  expect_matches_oracle(random_matrix(5, 4, rng), PcaMethod::Dense, 1e-8);
}

TEST(Pca, IterativeSolverMatchesOracle) {
  Rng rng(34);
  for (int trial = 0; trial < 10; ++trial) expect_matches_oracle(random_matrix(40, 7, rng), PcaMethod::Iterative, 1e-8);
}

TEST(Pca, CollinearPointsHaveUnitRatio) {
  Eigen::MatrixXd X(20, 4);
  Rng rng(35);
  for (Eigen::Index i = 0; i < 20; ++i) {
    const double t = rng.normal();
    X.row(i) << 1 + 2 * t, -t, 0.5 * t, 3;
  }
  const auto pca = pca_2d(X);
  EXPECT_NEAR(pca.explained_variance_ratio[0], 1.0, 1e-9);
  EXPECT_NEAR(pca.explained_variance_ratio[1], 0.0, 1e-9);
}

TEST(Pca, IsotropicSampleSplitsVarianceEvenly) {
  Rng rng(36);
  Eigen::MatrixXd X(10000, 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) X.row(i) << rng.normal(), rng.normal();
  const auto pca = pca_2d(X);
  EXPECT_NEAR(pca.explained_variance_ratio[0], 0.5, 0.05);
  EXPECT_NEAR(pca.explained_variance_ratio[1], 0.5, 0.05);
}

TEST(Pca, ProjectionsAreCentredScores) {
  Rng rng(37);
  const auto X = random_matrix(15, 3, rng);
  const auto pca = pca_2d(X);
  const Eigen::MatrixXd expect = (X.rowwise() - X.colwise().mean()) * pca.components;
  EXPECT_LT((expect - pca.projections).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, TooFewRowsIsInsufficientData) {
  try {
    pca_2d(Eigen::MatrixXd::Ones(2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

// --- layer curves ----------------------------------------------------------

TEST(Smoothing, ConstantCurveUnchanged) {
  const std::vector<double> a(9, 1.0 / 9);
  for (double s : {0.5, 1.0, 3.0})
    for (double v : gaussian_smooth(a, s)) EXPECT_NEAR(v, 1.0 / 9, 1e-15);
}

TEST(Smoothing, TinySigmaIsIdentity) {
  const std::vector<double> a{0.1, 0.5, 0.05, 0.35};
  const auto s = gaussian_smooth(a, 1e-6);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(s[i], a[i], 1e-15);
}

TEST(Smoothing, OneHotKeepsArgmaxAndMass) {
  for (std::size_t L : {5u, 8u, 32u})
    for (std::size_t k = 0; k < L; ++k)
      for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
        std::vector<double> a(L, 0.0);
        a[k] = 1.0;
        const auto s = gaussian_smooth(a, sigma);
        double mass = 0;
        for (double v : s) mass += v;
        EXPECT_NEAR(mass, 1.0, 1e-9);
        if (sigma <= 1.0) EXPECT_EQ(argmax(s), k);
      }
}

TEST(Smoothing, WideKernelPullsNearEdgePeakOntoTheEdge) {
  // Reflection folds the mirror image of layer 1 onto layer 0: g(1) + g(2) > g(0) + g(3) once sigma > ~1.2.
  std::vector<double> a(8, 0.0);
  a[1] = 1.0;
  EXPECT_EQ(argmax(gaussian_smooth(a, 1.0)), 1u);
  EXPECT_EQ(argmax(gaussian_smooth(a, 2.0)), 0u);
}

TEST(LayerReport, OneBasedArgmax) {
  LayerLRParams p{{0.0, 0.0, 5.0, 0.0}, {1.0}, 0.0};
  const auto r = layer_weight_report(Probe{p}, 1.0);
  EXPECT_EQ(r.argmax_layer, 3u);
  EXPECT_EQ(r.smoothed_argmax_layer, 3u);
  EXPECT_EQ(to_csv(r).substr(0, 18), "layer,raw,smoothed");
}

// --- Fisher and relative risk ---------------------------------------------

TEST(Fisher, WorkedTables) {
  EXPECT_NEAR(fisher_exact({3, 1, 1, 3}), 0.485714, 1e-6);
  EXPECT_NEAR(fisher_exact({5, 0, 0, 5}), 2.0 / 252.0, 1e-15);
  EXPECT_DOUBLE_EQ(fisher_exact({2, 2, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(fisher_exact({0, 0, 3, 4}), 1.0);
}

TEST(Fisher, MatchesIntegerEnumerationUpToThirty) {
  const oracle::Binomials C(30);
  for (std::uint64_t a = 0; a <= 30; ++a)
    for (std::uint64_t b = 0; a + b <= 30; ++b)
      for (std::uint64_t c = 0; a + b + c <= 30; ++c)
        for (std::uint64_t d = 0; a + b + c + d <= 30; ++d)
          ASSERT_NEAR(fisher_exact({a, b, c, d}), oracle::fisher_two_sided(a, b, c, d, C), 1e-10)
              << a << ' ' << b << ' ' << c << ' ' << d;
}

TEST(Fisher, SymmetricUnderTransposeAndRowSwap) {
  Rng rng(38);
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t a = rng.uniform_index(40), b = rng.uniform_index(40), c = rng.uniform_index(40),
                        d = rng.uniform_index(40);
    const double p = fisher_exact({a, b, c, d});
    EXPECT_NEAR(p, fisher_exact({a, c, b, d}), 1e-12);
    EXPECT_NEAR(p, fisher_exact({c, d, a, b}), 1e-12);
  }
}

TEST(RelativeRisk, Examples) {
  EXPECT_DOUBLE_EQ(relative_risk({40, 10, 40, 10}), 1.0);
  EXPECT_NEAR(relative_risk({40, 10, 33, 17}), 1.7, 1e-12);
  EXPECT_NEAR(relative_risk({90, 10, 87, 13}), 1.3, 1e-12);
  try {
    relative_risk({10, 0, 5, 5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedRatio);
  }
}

namespace {

std::vector<MismatchObservation> pattern(SourceRequired req, std::size_t match_ok, std::size_t match_err,
                                         std::size_t mis_ok, std::size_t mis_err) {
  const int aligned = req == SourceRequired::Parametric ? kParametric : kContextual;
  std::vector<MismatchObservation> out;
  auto add = [&](std::size_t n, int pred, bool ok) {
    for (std::size_t i = 0; i < n; ++i) out.push_back({req, pred, ok});
  };
  add(match_ok, aligned, true);
  add(match_err, aligned, false);
  add(mis_ok, 1 - aligned, true);
  add(mis_err, 1 - aligned, false);
  return out;
}

}  // namespace

TEST(Mismatch, AllAlignedAndCorrect) {
  const auto obs = pattern(SourceRequired::Parametric, 12, 0, 0, 0);
  const auto rep = mismatch_analysis(obs);
  ASSERT_EQ(rep.size(), 2u);
  EXPECT_EQ(rep[0].table, (ContingencyTable{12, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(*rep[0].p_value, 1.0);
  EXPECT_FALSE(rep[0].relative_risk.has_value());
  EXPECT_FALSE(rep[1].p_value.has_value());
  EXPECT_FALSE(rep[1].warnings.empty());
}

TEST(Mismatch, ReproducesSixtyPercentPattern) {
  // Mismatch row: 10 correct, 40 errors; match row: 25 / 25.
  const auto obs = pattern(SourceRequired::Contextual, 25, 25, 10, 40);
  const auto rep = mismatch_analysis(obs)[1];
  EXPECT_EQ(rep.condition, "contextual-required");
  EXPECT_NEAR(*rep.relative_risk, 0.8 / 0.5, 1e-12);
  EXPECT_LT(*rep.p_value, 0.01);
  const oracle::Binomials C(66);
  EXPECT_NEAR(*rep.p_value, oracle::fisher_two_sided(25, 25, 10, 40, C), 1e-12);
}

TEST(Mismatch, OrderInvariant) {
  auto obs = pattern(SourceRequired::Parametric, 7, 3, 2, 6);
  const auto more = pattern(SourceRequired::Contextual, 4, 4, 1, 5);
  obs.insert(obs.end(), more.begin(), more.end());
  const auto a = mismatch_analysis(obs);
  Rng rng(39);
  rng.shuffle(std::span<MismatchObservation>(obs));
  const auto b = mismatch_analysis(obs);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(a[i].table, b[i].table);
    EXPECT_EQ(*a[i].p_value, *b[i].p_value);
    EXPECT_EQ(*a[i].relative_risk, *b[i].relative_risk);
  }
}

// --- evaluation ------------------------------------------------------------

TEST(Evaluate, SaturatedBiasPredictsParametric) {
  SynthSpec s;
  s.n_per_class = 30;
  s.layers = 2;
  s.hidden = 3;
  s.planted_layer = 1;
  const auto ds = generate(s).dataset;
  const LayerLRParams p{{0.0, 0.0}, {0.0, 0.0, 0.0}, 100.0};
  const auto ev = evaluate_probe(Probe{p}, ds);
  for (int v : ev.predictions) EXPECT_EQ(v, kParametric);
  EXPECT_DOUBLE_EQ(ev.metrics.accuracy, 0.5);
  const LayerLRParams q{{0.0, 0.0}, {1.0, -1.0, 0.5}, -2.0};
  for (int v : evaluate_probe(Probe{q}, ds, 0.0).predictions) EXPECT_EQ(v, kParametric);
}

TEST(Evaluate, ReproducesTrainTimeValidationMetrics) {
  SynthSpec s;
  s.n_per_class = 200;
  s.separation = 0.6;
  const auto ds = generate(s).dataset;
  auto cfg = TrainConfig::defaults(ProbeVariant::LayerLR);
  cfg.max_epochs = 8;
  const auto res = train_probe(ds, cfg);
  const auto split = split_title_disjoint(ds, {1 - cfg.val_fraction, cfg.val_fraction, 0.0}, cfg.seed);
  const auto ev = evaluate_probe(res.probe, split.part(ds, Split::Val));
  EXPECT_EQ(ev.metrics.macro_f1, res.val_metrics->macro_f1);
  EXPECT_EQ(ev.metrics.accuracy, res.val_metrics->accuracy);
}

TEST(Evaluate, DimensionMismatchIsReported) {
  SynthSpec s;
  s.n_per_class = 3;
  const auto ds = generate(s).dataset;
  try {
    evaluate_probe(Probe{init_layer_lr(ds.layers, ds.hidden + 1, 1)}, ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

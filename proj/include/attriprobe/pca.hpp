#pragma once

// Two-component PCA. Small feature counts use a dense eigendecomposition of
// the covariance; large ones (real dumps have H in the thousands) use block
// subspace iteration on the centered data without forming the covariance.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "attriprobe/error.hpp"
#include "attriprobe/rng.hpp"

namespace attriprobe {

enum class PcaMethod { Auto, Dense, Iterative };

inline constexpr Eigen::Index kDensePcaMaxFeatures = 512;

struct PCAResult {
  Eigen::MatrixXd components;   // H x 2, orthonormal columns
  Eigen::MatrixXd projections;  // N x 2
  Eigen::Vector2d explained_variance_ratio = Eigen::Vector2d::Zero();
  Eigen::Vector2d explained_variance = Eigen::Vector2d::Zero();
  Eigen::VectorXd mean;         // zero when not centering
};

namespace detail {

/// Flip each column so its largest-magnitude entry (first on ties) is positive.
inline void fix_signs(Eigen::MatrixXd& comps) {
  for (Eigen::Index c = 0; c < comps.cols(); ++c) {
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < comps.rows(); ++r)
      if (std::abs(comps(r, c)) > std::abs(comps(arg, c))) arg = r;
    if (comps(arg, c) < 0) comps.col(c) *= -1.0;
  }
}

inline std::pair<Eigen::MatrixXd, Eigen::Vector2d> top2_dense(const Eigen::MatrixXd& Xc) {
  const double denom = static_cast<double>(Xc.rows() - 1);
  const Eigen::MatrixXd cov = (Xc.transpose() * Xc) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index H = cov.rows();
  Eigen::MatrixXd comps(H, 2);
  Eigen::Vector2d values = Eigen::Vector2d::Zero();
  for (Eigen::Index k = 0; k < 2; ++k) {
    if (k < H) {
      comps.col(k) = es.eigenvectors().col(H - 1 - k);
      values(k) = std::max(0.0, es.eigenvalues()(H - 1 - k));
    } else {
      comps.col(k).setZero();
    }
  }
  return {comps, values};
}

inline std::pair<Eigen::MatrixXd, Eigen::Vector2d> top2_iterative(const Eigen::MatrixXd& Xc) {
  const Eigen::Index H = Xc.cols();
  const Eigen::Index block = std::min<Eigen::Index>(H, 8);
  const double denom = static_cast<double>(Xc.rows() - 1);

  Rng rng(0x9ca);
  Eigen::MatrixXd V(H, block);
  for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(V);
  V = qr.householderQ() * Eigen::MatrixXd::Identity(H, block);

  Eigen::VectorXd ritz = Eigen::VectorXd::Zero(block);
  Eigen::MatrixXd ritz_vectors = V;
  for (int iter = 0; iter < 10000; ++iter) {
    const Eigen::MatrixXd W = Xc.transpose() * (Xc * V) / denom;  // cov * V
    // Rayleigh-Ritz on the current subspace.
    const Eigen::MatrixXd small = V.transpose() * W;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (small + small.transpose()));
    Eigen::VectorXd values = es.eigenvalues().reverse();
    ritz_vectors = V * es.eigenvectors().rowwise().reverse();

    // Residual of the top pair decides convergence.
    const Eigen::MatrixXd AR = W * es.eigenvectors().rowwise().reverse();
    double residual = 0.0;
    const Eigen::Index want = std::min<Eigen::Index>(2, block);
    for (Eigen::Index k = 0; k < want; ++k)
      residual = std::max(residual, (AR.col(k) - values(k) * ritz_vectors.col(k)).norm());
    const double scale = std::max(std::abs(values(0)), 1e-300);
    ritz = values;
    if (residual <= 1e-12 * scale) break;

    Eigen::HouseholderQR<Eigen::MatrixXd> next(W);
    V = next.householderQ() * Eigen::MatrixXd::Identity(H, block);
  }

  Eigen::MatrixXd comps = Eigen::MatrixXd::Zero(H, 2);
  Eigen::Vector2d values = Eigen::Vector2d::Zero();
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, block); ++k) {
    comps.col(k) = ritz_vectors.col(k).normalized();
    values(k) = std::max(0.0, ritz(k));
  }
  return {comps, values};
}

}  // namespace detail

/// Top-2 principal directions of the N x H matrix `X` (rows are samples).
inline PCAResult pca_2d(const Eigen::MatrixXd& X, bool center = true, PcaMethod method = PcaMethod::Auto) {
  if (X.rows() < 3) fail(ErrorKind::InsufficientData, "PCA needs at least 3 rows, got " + std::to_string(X.rows()));
  PCAResult out;
  out.mean = center ? Eigen::VectorXd(X.colwise().mean().transpose()) : Eigen::VectorXd::Zero(X.cols());
  const Eigen::MatrixXd Xc = X.rowwise() - out.mean.transpose();

  if (method == PcaMethod::Auto) method = X.cols() <= kDensePcaMaxFeatures ? PcaMethod::Dense : PcaMethod::Iterative;
  auto [comps, values] = method == PcaMethod::Dense ? detail::top2_dense(Xc) : detail::top2_iterative(Xc);
  detail::fix_signs(comps);

  const double total = Xc.squaredNorm() / static_cast<double>(X.rows() - 1);
  out.components = comps;
  out.explained_variance = values;
  if (total > 0) out.explained_variance_ratio = values / total;
  out.projections = Xc * comps;
  return out;
}

}  // namespace attriprobe

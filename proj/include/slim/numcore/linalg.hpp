#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "slim/numcore/types.hpp"

namespace slim {

template <typename Scalar>
struct RidgeModel {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;  // in original feature units
  Scalar intercept = 0;

  template <typename Derived>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> predict(const Eigen::MatrixBase<Derived>& X) const {
    return (X * weights).array() + intercept;
  }
};

struct RidgeOptions {
  bool standardize = true;
  bool intercept = true;
};

/// Solves (A + lambda I) w = b for symmetric positive semi-definite A.
/// With lambda == 0 a singular A is rejected rather than pseudo-inverted.
template <typename DerivedA, typename DerivedB>
auto ridge_solve(const Eigen::MatrixBase<DerivedA>& gram, const Eigen::MatrixBase<DerivedB>& rhs,
                 typename DerivedA::Scalar lambda) {
  using Scalar = typename DerivedA::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require_shape(gram.rows() == gram.cols() && gram.rows() == rhs.rows(), "ridge_solve");
  if (lambda < 0) throw Error("ridge_solve: lambda must be nonnegative");
  Mat system = gram;
  system.diagonal().array() += lambda;
  Eigen::LDLT<Mat> ldlt(system);
  const auto d = ldlt.vectorD();
  const Scalar scale = std::max<Scalar>(d.cwiseAbs().maxCoeff(), Scalar(1e-300));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      d.minCoeff() <= scale * Scalar(1e-12)) {
    throw NumericError("rank-deficient; supply lambda>0");
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w = ldlt.solve(rhs.derived().col(0));
  require_finite(w, "ridge_solve");
  return w;
}

/// Ridge regression. By default columns are z-scored and an intercept is
/// fitted; the returned weights are mapped back to the caller's units.
/// Zero-variance columns are left unscaled and receive zero weight.
template <typename DerivedX, typename DerivedY>
RidgeModel<typename DerivedX::Scalar> ridge_fit(const Eigen::MatrixBase<DerivedX>& X,
                                                const Eigen::MatrixBase<DerivedY>& y,
                                                typename DerivedX::Scalar lambda,
                                                RidgeOptions opts = {}) {
  using Scalar = typename DerivedX::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = X.rows();
  const Eigen::Index m = X.cols();
  require_shape(n >= 1 && y.size() == n, "ridge_fit");
  require_finite(X, "ridge_fit X");
  require_finite(y, "ridge_fit y");

  Vec mean = Vec::Zero(m);
  Vec scale = Vec::Ones(m);
  Scalar y_mean = 0;
  if (opts.intercept) {
    mean = X.colwise().mean().transpose();
    y_mean = y.mean();
  }
  Mat Z = X.rowwise() - mean.transpose();
  if (opts.standardize) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const Scalar sd = std::sqrt(Z.col(j).squaredNorm() / static_cast<Scalar>(n));
      if (sd > Scalar(1e-12)) {
        scale(j) = sd;
      } else {
        Z.col(j).setZero();
      }
    }
    Z = Z * scale.cwiseInverse().asDiagonal();
  }
  const Vec yc = y.derived().array() - y_mean;
  const Mat gram = Z.transpose() * Z;
  const Vec rhs = Z.transpose() * yc;
  const Vec w_std = ridge_solve(gram, rhs, lambda);

  RidgeModel<Scalar> model;
  model.weights = w_std.cwiseQuotient(scale);
  model.intercept = opts.intercept ? y_mean - mean.dot(model.weights) : Scalar(0);
  return model;
}

/// Coefficient of determination 1 - SS_res / SS_tot.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar r_squared(const Eigen::MatrixBase<DerivedA>& y_true,
                                    const Eigen::MatrixBase<DerivedB>& y_pred) {
  using Scalar = typename DerivedA::Scalar;
  require_shape(y_true.size() == y_pred.size(), "r_squared");
  if (y_true.size() < 2) throw Error("r_squared: need at least two samples");
  const Scalar mean = y_true.mean();
  const Scalar ss_tot = (y_true.array() - mean).square().sum();
  if (!(ss_tot > 0)) throw NumericError("r_squared: zero-variance target");
  const Scalar ss_res = (y_true - y_pred).squaredNorm();
  return Scalar(1) - ss_res / ss_tot;
}

/// Indices of the k largest |v_i|, ties broken by lowest index, returned in
/// rank order.
template <typename Derived>
std::vector<Eigen::Index> top_k_indices(const Eigen::MatrixBase<Derived>& v, int k) {
  if (k <= 0) throw Error("top_k: k must be positive");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(v(a)) > std::abs(v(b));
  });
  idx.resize(kk);
  return idx;
}

/// Zeroes everything outside the k largest-magnitude entries.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> top_k_mask(
    const Eigen::MatrixBase<Derived>& v, int k) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out =
      Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>::Zero(v.size());
  for (Eigen::Index i : top_k_indices(v, k)) out(i) = v(i);
  return out;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& u,
                                 const Eigen::MatrixBase<DerivedB>& v) {
  require_shape(u.size() == v.size(), "cosine");
  const auto nu = u.norm();
  const auto nv = v.norm();
  if (!(nu > 0) || !(nv > 0)) throw DegenerateError("cosine: zero vector");
  const auto c = u.cwiseProduct(v).sum() / (nu * nv);
  return std::clamp(c, typename DerivedA::Scalar(-1), typename DerivedA::Scalar(1));
}

}  // namespace slim

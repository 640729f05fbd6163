#pragma once

#include <Eigen/Dense>

#include <string_view>

#include "slim/error.hpp"

namespace slim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Throws NumericError naming `what` if any entry is NaN or Inf.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite value");
  }
}

inline void require_shape(bool ok, std::string_view what) {
  if (!ok) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace slim

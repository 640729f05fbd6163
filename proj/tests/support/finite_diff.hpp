#pragma once

#include <functional>
#include <vector>

#include "slim/numcore/types.hpp"

namespace slim::testing {

/// Central differences of a scalar function of several matrices.
inline std::vector<Matrix> central_diff(const std::function<double(const std::vector<Matrix>&)>& f,
                                        std::vector<Matrix> x, double h = 1e-5) {
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < x.size(); ++k) {
    Matrix g(x[k].rows(), x[k].cols());
    for (Eigen::Index i = 0; i < x[k].size(); ++i) {
      const double orig = x[k].data()[i];
      x[k].data()[i] = orig + h;
      const double fp = f(x);
      x[k].data()[i] = orig - h;
      const double fm = f(x);
      x[k].data()[i] = orig;
      g.data()[i] = (fp - fm) / (2 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// ||analytic - fd|| / (||fd|| + 1e-8), over all inputs jointly.
inline double relative_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& fd) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < fd.size(); ++k) {
    num += (analytic[k] - fd[k]).squaredNorm();
    den += fd[k].squaredNorm();
  }
  return std::sqrt(num) / (std::sqrt(den) + 1e-8);
}

}  // namespace slim::testing

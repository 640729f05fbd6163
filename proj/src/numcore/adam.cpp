#include "slim/numcore/adam.hpp"

#include <cmath>

namespace slim {

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  require_shape(params.size() == grads.size(), "adam: params/grads count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(params[i]->rows() == grads[i].rows() && params[i]->cols() == grads[i].cols(),
                  "adam: gradient shape");
    require_finite(grads[i], "adam gradient");
  }
  if (step_ == 0) {
    m_.clear();
    v_.clear();
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  } else {
    require_shape(m_.size() == params.size(), "adam: parameter list changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      require_shape(m_[i].rows() == params[i]->rows() && m_[i].cols() == params[i]->cols(),
                    "adam: parameter shape changed");
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseAbs2();
    const auto mhat = m_[i].array() / bc1;
    const auto vhat = v_[i].array() / bc2;
    params[i]->array() -= cfg_.lr * mhat / (vhat.sqrt() + cfg_.eps);
  }
}

}  // namespace slim

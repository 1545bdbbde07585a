#include "mcm/trainer/adam.hpp"

#include "mcm/errors.hpp"

#include <cmath>

namespace mcm::trainer {

void Adam::init(const diff::ParamStore& store) {
  m_.clear();
  v_.clear();
  for (const auto& e : store) {
    m_.push_back(diff::Matrix::Zero(e.value.rows(), e.value.cols()));
    v_.push_back(diff::Matrix::Zero(e.value.rows(), e.value.cols()));
  }
  step_ = 0;
}

void Adam::ascent_step(diff::ParamStore& store, double lr) {
  if (m_.size() != store.size()) throw std::logic_error("Adam state does not match the parameter store");
  for (const auto& e : store) {
    if (!e.grad.allFinite()) throw NumericError("non-finite gradient for parameter '" + e.name + "'");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(i);
    m_[i] = beta1 * m_[i] + (1.0 - beta1) * e.grad;
    v_[i] = beta2 * v_[i] + (1.0 - beta2) * e.grad.cwiseAbs2();
    e.value.array() += lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

void clip_gradients(diff::ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& e : store) sq += e.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& e : store) e.grad *= s;
}

} // namespace mcm::trainer

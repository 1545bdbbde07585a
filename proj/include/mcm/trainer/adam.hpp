#pragma once

#include "mcm/diff/param_store.hpp"

#include <vector>

namespace mcm::trainer {

/// Adam with bias correction, taking ascent steps (params += lr * m_hat / (sqrt(v_hat) + eps)).
class Adam {
public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Allocates zero moments matching the store.
  void init(const diff::ParamStore& store);

  /// Throws NumericError naming the first parameter with a non-finite
  /// gradient; the store and moments are left untouched in that case.
  void ascent_step(diff::ParamStore& store, double lr);

  long steps() const noexcept { return step_; }
  std::vector<diff::Matrix>& first() noexcept { return m_; }
  std::vector<diff::Matrix>& second() noexcept { return v_; }
  const std::vector<diff::Matrix>& first() const noexcept { return m_; }
  const std::vector<diff::Matrix>& second() const noexcept { return v_; }
  void set_steps(long s) noexcept { step_ = s; }

private:
  std::vector<diff::Matrix> m_;
  std::vector<diff::Matrix> v_;
  long step_ = 0;
};

/// Scales all gradients so that their global L2 norm is at most max_norm.
void clip_gradients(diff::ParamStore& store, double max_norm);

} // namespace mcm::trainer

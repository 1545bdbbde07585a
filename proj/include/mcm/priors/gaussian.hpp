#pragma once

#include <Eigen/Dense>

namespace mcm {

/// Diagonal Gaussian over R^K. Used both for conditional priors and for
/// variational posteriors.
struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  Eigen::Index dim() const noexcept { return mean.size(); }

  /// Throws std::invalid_argument unless shapes agree, the mean is finite and
  /// every variance is finite and strictly positive.
  void validate() const;
};

} // namespace mcm

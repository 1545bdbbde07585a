#include "mcm/priors/gaussian.hpp"

#include <stdexcept>

namespace mcm {

void DiagGaussian::validate() const {
  if (mean.size() != variance.size()) throw std::invalid_argument("DiagGaussian: mean/variance size mismatch");
  if (!mean.allFinite()) throw std::invalid_argument("DiagGaussian: non-finite mean");
  if (!variance.allFinite() || (variance.array() <= 0.0).any()) {
    throw std::invalid_argument("DiagGaussian: variance must be finite and positive");
  }
}

} // namespace mcm

#pragma once

#include "mcm/diff/tape.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace mcm::diff {

/// Builds a scalar on the given tape. The tape is bound to the ParamStore
/// being checked; the function must be deterministic.
using Recordable = std::function<Var(Tape&)>;

struct GradCheckOptions {
  double step = 1e-6;
  /// Check at most this many coordinates per parameter entry, chosen with
  /// `seed`; nullopt checks every coordinate.
  std::optional<std::size_t> max_coords_per_entry;
  std::uint64_t seed = 0;
  /// Only entries whose name starts with this prefix are perturbed.
  std::string prefix;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  std::size_t coords_checked = 0;
};

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// Throws NumericError naming the parameter when the function value or a
/// gradient entry is non-finite.
GradCheckResult grad_check(const Recordable& f, ParamStore& point, const GradCheckOptions& opts = {});

} // namespace mcm::diff

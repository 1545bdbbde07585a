#pragma once

#include "mcm/model/observations.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mcm::eval {

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  std::size_t n = 0;
};

/// Errors on the log scale. Throws std::invalid_argument on empty or
/// mismatched inputs.
Metrics metrics(std::span<const double> truth, std::span<const double> predicted);

enum class DomainTag { InDomain, OutOfDomain };

const char* to_string(DomainTag t) noexcept;
DomainTag domain_tag_from(const std::string& s);

/// Out-of-domain iff the entry's solute or solvent never occurs in `train`.
std::vector<DomainTag> tag_domain(const model::ObservationTable& data, std::span<const int> train,
                                  std::span<const int> test);

} // namespace mcm::eval

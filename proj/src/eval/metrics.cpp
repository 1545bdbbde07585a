#include "mcm/eval/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace mcm::eval {

Metrics metrics(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.empty()) throw std::invalid_argument("metrics: empty input");
  if (truth.size() != predicted.size()) throw std::invalid_argument("metrics: size mismatch");
  Metrics m;
  m.n = truth.size();
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double d = predicted[k] - truth[k];
    m.mae += std::abs(d);
    m.mse += d * d;
  }
  m.mae /= static_cast<double>(m.n);
  m.mse /= static_cast<double>(m.n);
  return m;
}

const char* to_string(DomainTag t) noexcept { return t == DomainTag::InDomain ? "in_domain" : "out_of_domain"; }

DomainTag domain_tag_from(const std::string& s) {
  if (s == "in_domain") return DomainTag::InDomain;
  if (s == "out_of_domain") return DomainTag::OutOfDomain;
  throw std::invalid_argument("unknown domain tag '" + s + "'");
}

std::vector<DomainTag> tag_domain(const model::ObservationTable& data, std::span<const int> train,
                                  std::span<const int> test) {
  std::vector<bool> solute(static_cast<std::size_t>(data.solutes()), false);
  std::vector<bool> solvent(static_cast<std::size_t>(data.solvents()), false);
  for (int k : train) {
    const auto& e = data.entries.at(static_cast<std::size_t>(k));
    solute[static_cast<std::size_t>(e.solute)] = true;
    solvent[static_cast<std::size_t>(e.solvent)] = true;
  }
  std::vector<DomainTag> tags;
  tags.reserve(test.size());
  for (int k : test) {
    const auto& e = data.entries.at(static_cast<std::size_t>(k));
    const bool in = solute[static_cast<std::size_t>(e.solute)] && solvent[static_cast<std::size_t>(e.solvent)];
    tags.push_back(in ? DomainTag::InDomain : DomainTag::OutOfDomain);
  }
  return tags;
}

} // namespace mcm::eval

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mcm::mol {
class MoleculeLibrary;
}

namespace mcm::model {

struct Observation {
  int solute = 0;
  int solvent = 0;
  double ln_gamma = 0.0;
};

/// Sparse M x N matrix of measured ln(gamma) values. Solute and solvent
/// indices are separate spaces; duplicate (i, j) pairs are allowed.
class ObservationTable {
public:
  std::vector<std::string> solute_ids;
  std::vector<std::string> solvent_ids;
  std::vector<Observation> entries;

  int solutes() const noexcept { return static_cast<int>(solute_ids.size()); }
  int solvents() const noexcept { return static_cast<int>(solvent_ids.size()); }
  std::size_t size() const noexcept { return entries.size(); }

  /// Throws DataError on out-of-range indices or non-finite values.
  void validate() const;

  /// Throws DataError naming the first id missing from the library.
  void check_ids(const mol::MoleculeLibrary& lib) const;

  /// Same index spaces, only the listed entries.
  ObservationTable subset(const std::vector<int>& entry_indices) const;

  /// CSV with header `solute_id,solvent_id,ln_gamma`. Index order is the
  /// order of first appearance. ParseError positions are line numbers.
  static ObservationTable read_csv(std::istream& in);
  static ObservationTable load(const std::string& path);
  void write_csv(std::ostream& out) const;
};

} // namespace mcm::model

#pragma once

#include "mcm/model/observations.hpp"
#include "mcm/trainer/config.hpp"

#include <cstdint>
#include <vector>

namespace mcm::eval {

inline constexpr int kFolds = 10;

/// Entry indices into an ObservationTable.
struct Fold {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

/// The fixed split used for hyperparameter search. Its test entries are
/// left out of cross-validation scoring.
struct HyperSplit {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

struct SplitPlan {
  std::vector<Fold> folds;
  HyperSplit hyper;
};

/// Seeded 80/10/10 split, independent of the fold assignment.
HyperSplit make_hyper_split(std::size_t entries, std::uint64_t seed);

/// Ten folds from a seeded shuffle. Fold k tests on decile k and validates
/// on decile k+1 (mod 10). By component, deciles are drawn over solutes and
/// each entry follows its solute. Throws DataError when the table has fewer
/// than 10 entries (or 10 solutes when splitting by component).
SplitPlan make_splits(const model::ObservationTable& data, std::uint64_t seed,
                      trainer::SplitBy by = trainer::SplitBy::Entry);

} // namespace mcm::eval

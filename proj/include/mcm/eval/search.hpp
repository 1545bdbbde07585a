#pragma once

#include "mcm/eval/splits.hpp"
#include "mcm/trainer/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mcm::eval {

/// Discrete value lists over TrainConfig keys, sampled independently.
struct SearchSpace {
  std::vector<std::pair<std::string, std::vector<std::string>>> dims;

  /// Throws std::invalid_argument on empty lists, unknown keys or values
  /// TrainConfig rejects.
  void validate() const;

  /// The published spaces: GNN/MoFo for VEM, MoFo for MLE.
  static SearchSpace defaults(priors::PriorKind prior, trainer::Mode mode);

  /// JSON object `{"key": [values...]}`; numbers and strings both accepted.
  static SearchSpace from_json(const std::string& text);
  std::string to_json() const;
};

struct Trial {
  int index = 0;
  std::vector<std::pair<std::string, std::string>> sampled;
  trainer::TrainConfig config;
  /// Index of the earlier identical trial whose result this one reuses.
  std::optional<int> duplicate_of;
  bool ok = false;
  double mse = 0.0;
  std::string error;
};

struct SearchResult {
  std::vector<Trial> trials;
  /// Best successful trial; nullopt when every trial failed.
  std::optional<int> best;

  /// One JSON object per trial.
  void write_trials(std::ostream& out) const;
};

/// MSE on the hyperparameter test split of a model trained on its train
/// split (validation used for MLE early stopping).
double score_on_hyper_split(const trainer::TrainConfig& cfg, const model::ObservationTable& data,
                            const mol::MoleculeLibrary& lib, const HyperSplit& split);

/// Samples `trials` configs over `base`, trains each distinct one once and
/// keeps the lowest-MSE trial. The hyperparameter split comes from
/// `split_seed`; training failures are recorded per trial.
SearchResult random_grid_search(const SearchSpace& space, const trainer::TrainConfig& base,
                                const model::ObservationTable& data, const mol::MoleculeLibrary& lib,
                                int trials, std::uint64_t sample_seed, std::uint64_t split_seed, int jobs = 1);

} // namespace mcm::eval

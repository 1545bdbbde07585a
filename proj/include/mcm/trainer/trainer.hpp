#pragma once

#include "mcm/model/elbo.hpp"
#include "mcm/mol/molecule.hpp"
#include "mcm/priors/checkpoint.hpp"
#include "mcm/trainer/adam.hpp"
#include "mcm/trainer/config.hpp"

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mcm::trainer {

using diff::Matrix;
using diff::ParamStore;

/// Network inputs for every solute and solvent of a table, in index order.
struct ComponentInputs {
  priors::NetworkInput solutes;
  priors::NetworkInput solvents;
};

/// Throws DataError when an id is missing from the library or a GNN prior
/// meets a FORMULA record.
ComponentInputs make_component_inputs(const model::ObservationTable& data, const mol::MoleculeLibrary& lib,
                                      priors::PriorKind kind);

inline constexpr const char* kSolutePrefix = "solute/";
inline constexpr const char* kSolventPrefix = "solvent/";

/// Everything needed to predict: config, component ids, which components
/// were seen in training, and the parameters (theta, plus phi for VEM).
struct TrainedModel {
  TrainConfig config;
  std::vector<std::string> solute_ids;
  std::vector<std::string> solvent_ids;
  std::vector<bool> solute_seen;
  std::vector<bool> solvent_seen;
  ParamStore params;

  bool variational() const noexcept { return config.mode == Mode::Vem; }
  priors::Network network(bool solute) const;

  /// Prior means (VEM) or point estimates (MLE), one row per input.
  Matrix structure_means(bool solute, const priors::NetworkInput& in) const;

  /// VEM only; throws std::logic_error for MLE models.
  model::VariationalState state() const;

  void write_to(priors::Archive& ar) const;
  static TrainedModel read_from(const priors::Archive& ar);

  /// Posterior parameters with component ids and seen flags.
  priors::Archive variational_archive() const;
};

struct LogRecord {
  std::string run_id;
  int epoch = 0;
  double objective = 0.0;
  double train_mae = 0.0;
  double train_mse = 0.0;
  double lr = 0.0;

  std::string to_json() const;
};

using LogSink = std::function<void(const LogRecord&)>;

/// Part of the training objective; MLE has only the likelihood.
enum class ObjectiveTerm { Total, LogLik, RegU, RegV };

/// One training run (VEM or MLE) over a subset of a table's entries. The
/// table fixes the solute/solvent index spaces; `train` selects entries.
class Trainer {
public:
  Trainer(TrainConfig cfg, const model::ObservationTable& data, std::vector<int> train, ComponentInputs inputs,
          std::string run_id = "run");

  /// MLE early-stopping entries (indices into the table).
  void set_validation(std::vector<int> entries);

  /// One Adam step on the batch; returns the minibatch objective before the
  /// update (ELBO estimate for VEM, scaled log-likelihood for MLE).
  double step(std::span<const int> batch, double lr);

  /// One pass of ceil(|train| / m) batches; returns the mean objective.
  double run_epoch();

  /// Runs the remaining epochs up to config().epochs.
  void train(const LogSink& sink = {});

  int epoch() const noexcept { return epoch_; }
  long optimizer_steps() const noexcept { return adam_.steps(); }
  const TrainConfig& config() const noexcept { return cfg_; }
  const ParamStore& params() const noexcept { return store_; }
  ParamStore& params() noexcept { return store_; }
  double best_validation_mse() const noexcept { return best_val_mse_; }
  int best_epoch() const noexcept { return best_epoch_; }

  /// Means used for prediction: phi means (VEM) or network outputs (MLE).
  Matrix solute_means() const;
  Matrix solvent_means() const;

  /// MAE and MSE of the mean predictions over the given entries.
  std::pair<double, double> errors(std::span<const int> entries) const;

  /// Best-validation parameters for MLE with validation, else current ones.
  TrainedModel model() const;

  /// Full resumable state at an epoch boundary.
  void save_state(priors::Archive& ar) const;
  void restore_state(const priors::Archive& ar);

  /// Objective recorded on a fresh tape without updating (for gradient checks).
  diff::Var objective(diff::Tape& tape, std::span<const int> batch, std::span<const Matrix> eps_u,
                      std::span<const Matrix> eps_v, bool training_mode,
                      ObjectiveTerm term = ObjectiveTerm::Total) const;

private:
  void init_params();
  double validation_mse() const;
  void maybe_early_stop();

  TrainConfig cfg_;
  const model::ObservationTable* data_;
  std::vector<int> train_;
  std::vector<int> validation_;
  ComponentInputs inputs_;
  std::string run_id_;
  priors::Network net_u_;
  priors::Network net_v_;
  ParamStore store_;
  Adam adam_;
  mutable std::mt19937_64 rng_;
  int epoch_ = 0;
  double train_solutes_ = 0.0;
  double train_solvents_ = 0.0;
  std::vector<bool> solute_seen_;
  std::vector<bool> solvent_seen_;
  std::optional<ParamStore> best_;
  double best_val_mse_ = 0.0;
  int best_epoch_ = -1;
  double last_objective_ = 0.0;
};

} // namespace mcm::trainer

#pragma once

#include "mcm/eval/metrics.hpp"
#include "mcm/trainer/trainer.hpp"

#include <string>

namespace mcm::eval {

using diff::Matrix;
using RowVector = Eigen::RowVectorXd;

struct Prediction {
  double ln_gamma = 0.0;
  double gamma = 1.0;
};

/// ln gamma = u . v; gamma = exp(ln gamma).
Prediction predict_from_latents(const RowVector& u, const RowVector& v);

/// One row per input: the variational mean for components seen in training
/// (VEM, unless `prior_only`), otherwise the structure-conditioned mean.
Matrix latent_means(const trainer::TrainedModel& model, bool solute, const priors::NetworkInput& in,
                    bool prior_only = false);

/// Structure for a reference: `SMILES:<s>`, `FORMULA:<f>`, `GRAPH:<g>`, or an
/// id looked up in `lib`. Throws ParseError when nothing resolves.
mol::Molecule resolve_structure(const std::string& ref, const mol::MoleculeLibrary* lib);

struct ComponentLatent {
  RowVector mean;
  DomainTag tag = DomainTag::OutOfDomain;
};

/// Predicts for any combination of in-domain (seen id) and out-of-domain
/// (structure) components.
class Predictor {
public:
  explicit Predictor(trainer::TrainedModel model, const mol::MoleculeLibrary* lib = nullptr);

  ComponentLatent latent(const std::string& ref, bool solute) const;

  struct Result {
    Prediction value;
    ComponentLatent solute;
    ComponentLatent solvent;
  };
  Result predict(const std::string& solute, const std::string& solvent) const;

  const trainer::TrainedModel& model() const noexcept { return model_; }

private:
  trainer::TrainedModel model_;
  const mol::MoleculeLibrary* lib_;
};

} // namespace mcm::eval

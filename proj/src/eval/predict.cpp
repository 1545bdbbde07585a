#include "mcm/eval/predict.hpp"

#include "mcm/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mcm::eval {

Prediction predict_from_latents(const RowVector& u, const RowVector& v) {
  if (u.size() != v.size()) throw std::invalid_argument("predict: latent dimensions differ");
  const double l = u.dot(v);
  return {l, std::exp(l)};
}

Matrix latent_means(const trainer::TrainedModel& model, bool solute, const priors::NetworkInput& in, bool prior_only) {
  Matrix out = model.structure_means(solute, in);
  if (!model.variational() || prior_only) return out;
  const auto& seen = solute ? model.solute_seen : model.solvent_seen;
  if (static_cast<std::size_t>(in.count()) != seen.size()) {
    throw DataError("predict: input count does not match the model's components");
  }
  const auto state = model.state();
  const Matrix& phi = solute ? state.u_mean : state.v_mean;
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) out.row(static_cast<Eigen::Index>(i)) = phi.row(static_cast<Eigen::Index>(i));
  return out;
}

mol::Molecule resolve_structure(const std::string& ref, const mol::MoleculeLibrary* lib) {
  static const std::pair<const char*, mol::RecordKind> kPrefixes[] = {
      {"SMILES:", mol::RecordKind::Smiles}, {"FORMULA:", mol::RecordKind::Formula}, {"GRAPH:", mol::RecordKind::Graph}};
  for (const auto& [prefix, kind] : kPrefixes) {
    const std::string p(prefix);
    if (ref.rfind(p, 0) == 0) return mol::make_molecule(ref, kind, ref.substr(p.size()));
  }
  if (lib && lib->contains(ref)) return lib->at(ref);
  throw ParseError("cannot resolve component '" + ref + "' (not a known id; use SMILES:, FORMULA: or GRAPH:)");
}

Predictor::Predictor(trainer::TrainedModel model, const mol::MoleculeLibrary* lib) : model_(std::move(model)), lib_(lib) {}

ComponentLatent Predictor::latent(const std::string& ref, bool solute) const {
  const auto& ids = solute ? model_.solute_ids : model_.solvent_ids;
  const auto& seen = solute ? model_.solute_seen : model_.solvent_seen;
  const auto it = std::find(ids.begin(), ids.end(), ref);
  if (it != ids.end()) {
    const auto i = static_cast<std::size_t>(it - ids.begin());
    if (seen[i] && model_.variational()) {
      const auto state = model_.state();
      const Matrix& phi = solute ? state.u_mean : state.v_mean;
      return {phi.row(static_cast<Eigen::Index>(i)), DomainTag::InDomain};
    }
  }
  const mol::Molecule m = resolve_structure(ref, lib_);
  const auto in = priors::make_input({&m}, model_.config.prior);
  const Matrix mean = model_.structure_means(solute, in);
  bool in_domain = false;
  if (it != ids.end()) in_domain = seen[static_cast<std::size_t>(it - ids.begin())];
  return {mean.row(0), in_domain ? DomainTag::InDomain : DomainTag::OutOfDomain};
}

Predictor::Result Predictor::predict(const std::string& solute, const std::string& solvent) const {
  Result r;
  r.solute = latent(solute, true);
  r.solvent = latent(solvent, false);
  r.value = predict_from_latents(r.solute.mean, r.solvent.mean);
  return r;
}

} // namespace mcm::eval

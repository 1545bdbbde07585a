#pragma once

#include "mcm/diff/tape.hpp"
#include "mcm/model/observations.hpp"
#include "mcm/priors/gaussian.hpp"
#include "mcm/priors/network.hpp"

#include <span>
#include <string>
#include <vector>

namespace mcm::model {

using diff::Matrix;
using diff::ParamStore;
using diff::Tape;
using diff::Var;
using priors::GaussianVars;

inline constexpr double kDefaultLambda = 0.15;

/// ln N(y; u.v, lambda^2).
double log_likelihood(double ln_gamma, const Eigen::VectorXd& u, const Eigen::VectorXd& v, double lambda);

/// KL(q || p) for diagonal Gaussians of equal dimension.
double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p);

/// mean + sqrt(variance) * eps.
Eigen::VectorXd reparam_sample(const DiagGaussian& q, const Eigen::VectorXd& eps);

/// Mean-field posteriors, one row per solute / solvent. Variances are kept
/// as log-variances so that any real value is a valid state.
struct VariationalState {
  Matrix u_mean;
  Matrix u_logvar;
  Matrix v_mean;
  Matrix v_logvar;

  int latent_dim() const noexcept { return static_cast<int>(u_mean.cols()); }
  DiagGaussian solute(int i) const;
  DiagGaussian solvent(int j) const;

  /// Throws DataError on shape mismatch with (M, N, K) or non-finite values.
  void validate(int solutes, int solvents, int latent_dim) const;

  static constexpr const char* kUMean = "phi/u_mean";
  static constexpr const char* kULogvar = "phi/u_logvar";
  static constexpr const char* kVMean = "phi/v_mean";
  static constexpr const char* kVLogvar = "phi/v_logvar";

  void add_to(ParamStore& store) const;
  static VariationalState from(const ParamStore& store);
};

/// Posterior parameters on the tape (all rows).
struct PosteriorVars {
  Var mean;
  Var logvar;
};

PosteriorVars posterior_vars(Tape& tape, bool solute);

enum class ElboVariant { KL, Entropy };

const char* to_string(ElboVariant v) noexcept;
ElboVariant elbo_variant_from(const std::string& s);

struct MinibatchInputs {
  const ObservationTable* data = nullptr;
  /// Entry indices into data->entries.
  std::span<const int> batch;
  /// Prior parameters for every solute (M rows) and solvent (N rows).
  GaussianVars prior_u;
  GaussianVars prior_v;
  PosteriorVars q_u;
  PosteriorVars q_v;
  /// One |I| x K (resp. |J| x K) standard normal matrix per sample, rows in
  /// the order of the sorted distinct indices returned by batch_indices().
  std::span<const Matrix> eps_u;
  std::span<const Matrix> eps_v;
  ElboVariant variant = ElboVariant::KL;
  double lambda = kDefaultLambda;
  /// Dataset size |D| and component counts used for the scale factors.
  double data_size = 0.0;
  double solute_count = 0.0;
  double solvent_count = 0.0;
};

struct ElboTerms {
  Var elbo;
  /// Scaled likelihood term.
  Var loglik;
  /// Scaled prior regularizer (-KL, or cross-entropy + entropy) per side.
  Var reg_u;
  Var reg_v;
};

/// Sorted distinct solute and solvent indices touched by a batch.
struct BatchIndices {
  std::vector<int> solutes;
  std::vector<int> solvents;
};
BatchIndices batch_indices(const ObservationTable& data, std::span<const int> batch);

/// Minibatch ELBO estimate. Throws std::invalid_argument on an empty batch
/// or mis-shaped noise.
ElboTerms elbo_minibatch(Tape& tape, const MinibatchInputs& in);

/// Exact ELBO of the full table: the Gaussian expectation of the squared
/// residual has a closed form, so no sampling is involved.
Var elbo_closed_form(Tape& tape, const ObservationTable& data, const GaussianVars& prior_u, const GaussianVars& prior_v,
                     const PosteriorVars& q_u, const PosteriorVars& q_v, double lambda);

double elbo_closed_form(const ObservationTable& data, const std::vector<DiagGaussian>& prior_u,
                        const std::vector<DiagGaussian>& prior_v, const VariationalState& q, double lambda);

/// ln p(y) for a single observation with K = 1 scalar priors, by 2-D grid
/// integration over +-8 prior standard deviations in log space. The grid is
/// refined until successive estimates agree to 1e-10.
double log_marginal_likelihood_bruteforce(const ObservationTable& data, const DiagGaussian& prior_u,
                                          const DiagGaussian& prior_v, double lambda);

} // namespace mcm::model

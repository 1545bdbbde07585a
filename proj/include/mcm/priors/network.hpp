#pragma once

#include "mcm/diff/tape.hpp"
#include "mcm/priors/gaussian.hpp"
#include "mcm/priors/graph_batch.hpp"

#include <random>
#include <string>
#include <vector>

namespace mcm::priors {

using diff::Matrix;
using diff::ParamStore;
using diff::Tape;
using diff::Var;

enum class PriorKind { Mofo, Gnn };
enum class Activation { Tanh, Relu };
enum class Aggregation { Sum, Mean };

const char* to_string(PriorKind k) noexcept;
const char* to_string(Activation a) noexcept;
const char* to_string(Aggregation a) noexcept;
PriorKind prior_kind_from(const std::string& s);
Activation activation_from(const std::string& s);
Aggregation aggregation_from(const std::string& s);

struct NetworkConfig {
  PriorKind kind = PriorKind::Mofo;
  /// Hidden width for MoFo, representation dim d for the GNN.
  int width = 64;
  /// Hidden layers for MoFo, message-passing layers for the GNN.
  int layers = 2;
  Activation activation = Activation::Tanh;
  Aggregation aggregation = Aggregation::Sum;
  /// 0 disables skip connections.
  int skip = 0;
  double dropout = 0.0;
  bool bias = true;
  /// 2K for Gaussian priors, K for point estimates.
  int output = 8;

  void validate() const;
};

/// Component inputs for one network call: one row of formula counts per
/// component and, for the GNN, the batched graphs in the same order.
struct NetworkInput {
  Matrix features;
  GraphBatch graphs;
  int count() const { return static_cast<int>(features.rows()); }
};

NetworkInput make_input(const std::vector<const mol::Molecule*>& components, PriorKind kind);

struct ForwardMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

/// One parametric prior network (solutes or solvents). Parameters live in a
/// ParamStore under `prefix`; the object only holds the architecture.
class Network {
public:
  Network(NetworkConfig cfg, std::string prefix);

  const NetworkConfig& config() const noexcept { return cfg_; }
  const std::string& prefix() const noexcept { return prefix_; }

  void init_params(ParamStore& store, std::mt19937_64& rng) const;

  /// count x output matrix on the tape.
  Var forward(Tape& tape, const NetworkInput& in, const ForwardMode& mode = {}) const;

  /// GNN only: final node features (num_nodes x d) before pooling.
  Var node_features(Tape& tape, const NetworkInput& in, const ForwardMode& mode = {}) const;

  /// One message-passing layer applied to H (num_nodes x d).
  Var film_layer(Tape& tape, Var h, const GraphBatch& g, int layer, const ForwardMode& mode = {}) const;

  std::string name(const std::string& local) const { return prefix_ + local; }

private:
  Var mofo_forward(Tape& tape, const NetworkInput& in, const ForwardMode& mode) const;
  Var gnn_forward(Tape& tape, const NetworkInput& in, const ForwardMode& mode) const;

  NetworkConfig cfg_;
  std::string prefix_;
};

struct GaussianVars {
  Var mean;
  Var variance;
};

inline constexpr double kVarianceFloor = 1e-6;

/// Splits a count x 2K output into means and softplus(.) + 1e-6 variances.
GaussianVars gaussian_head(Var out, int latent_dim);

/// Inference-mode evaluation of a prior network for every input row.
std::vector<DiagGaussian> evaluate_priors(const Network& net, const ParamStore& store, const NetworkInput& in);

/// Inference-mode raw outputs (count x output).
Matrix evaluate_outputs(const Network& net, const ParamStore& store, const NetworkInput& in);

DiagGaussian mofo_prior(const Network& net, const ParamStore& store, const mol::FormulaCounts& features);
DiagGaussian gnn_prior(const Network& net, const ParamStore& store, const mol::MoleculeGraph& graph);

} // namespace mcm::priors

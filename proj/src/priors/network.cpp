#include "mcm/priors/network.hpp"

#include "mcm/errors.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace mcm::priors {

namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

void add_linear(ParamStore& store, const std::string& name, int in, int out, bool bias, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(name + "/w", uniform(in, out, bound, rng));
  if (bias) store.add(name + "/b", uniform(1, out, bound, rng));
}

Var linear(Tape& tape, Var x, const std::string& name, bool bias) {
  Var y = diff::matmul(x, tape.param(name + "/w"));
  return bias ? y + tape.param(name + "/b") : y;
}

Var activate(Var x, Activation a) {
  return a == Activation::Tanh ? diff::tanh(x) : diff::relu(x);
}

Var dropout(Tape& tape, Var x, double p, const ForwardMode& mode) {
  if (!mode.training || p <= 0.0) return x;
  if (mode.rng == nullptr) throw std::invalid_argument("dropout in training mode needs an rng");
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(x.rows(), x.cols());
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < mask.cols(); ++j) {
    for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(*mode.rng) ? s : 0.0;
  }
  return x * tape.constant(std::move(mask));
}

std::string layer_name(int layer, std::size_t edge_type) {
  return "gnn/l" + std::to_string(layer) + "/e" + std::to_string(edge_type);
}

} // namespace

const char* to_string(PriorKind k) noexcept { return k == PriorKind::Mofo ? "mofo" : "gnn"; }
const char* to_string(Activation a) noexcept { return a == Activation::Tanh ? "tanh" : "relu"; }
const char* to_string(Aggregation a) noexcept { return a == Aggregation::Sum ? "sum" : "mean"; }

PriorKind prior_kind_from(const std::string& s) {
  if (s == "mofo") return PriorKind::Mofo;
  if (s == "gnn") return PriorKind::Gnn;
  throw std::invalid_argument("unknown prior '" + s + "' (expected mofo or gnn)");
}

Activation activation_from(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + s + "' (expected tanh or relu)");
}

Aggregation aggregation_from(const std::string& s) {
  if (s == "sum") return Aggregation::Sum;
  if (s == "mean") return Aggregation::Mean;
  throw std::invalid_argument("unknown aggregation '" + s + "' (expected sum or mean)");
}

void NetworkConfig::validate() const {
  if (width < 1) throw std::invalid_argument("network width must be positive");
  if (layers < 0 || (kind == PriorKind::Gnn && layers < 1)) throw std::invalid_argument("invalid layer count");
  if (skip < 0) throw std::invalid_argument("skip period must be nonnegative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (output < 1) throw std::invalid_argument("network output width must be positive");
}

NetworkInput make_input(const std::vector<const mol::Molecule*>& components, PriorKind kind) {
  NetworkInput in;
  in.features.resize(static_cast<Eigen::Index>(components.size()), mol::kFormulaFeatures);
  std::vector<const mol::MoleculeGraph*> graphs;
  for (std::size_t r = 0; r < components.size(); ++r) {
    const auto& m = *components[r];
    for (std::size_t c = 0; c < mol::kFormulaFeatures; ++c) {
      in.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m.features.counts[c];
    }
    if (kind == PriorKind::Gnn) {
      if (!m.graph) throw DataError("molecule '" + m.id + "' has no graph; the GNN prior needs SMILES or GRAPH records");
      graphs.push_back(&*m.graph);
    }
  }
  if (kind == PriorKind::Gnn) in.graphs = GraphBatch::build(graphs);
  return in;
}

Network::Network(NetworkConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
  cfg_.validate();
}

void Network::init_params(ParamStore& store, std::mt19937_64& rng) const {
  const int d = cfg_.width;
  if (cfg_.kind == PriorKind::Mofo) {
    int in = static_cast<int>(mol::kFormulaFeatures);
    for (int l = 0; l < cfg_.layers; ++l) {
      add_linear(store, name("mofo/l" + std::to_string(l)), in, d, cfg_.bias, rng);
      in = d;
    }
    add_linear(store, name("mofo/out"), in, cfg_.output, cfg_.bias, rng);
    return;
  }

  store.add(name("gnn/atom_embed"), uniform(mol::kAtomTypes, d, 1.0, rng));
  store.add(name("gnn/bond_embed"), uniform(mol::kBondTypes, d, 1.0, rng));
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 0; l < cfg_.layers; ++l) {
    for (std::size_t e = 0; e < kEdgeTypes; ++e) {
      const std::string base = name(layer_name(l, e));
      store.add(base + "/w", uniform(d, d, bound, rng));
      store.add(base + "/film_w", uniform(d, 2 * d, bound, rng));
      Matrix fb = Matrix::Zero(1, 2 * d);
      fb.leftCols(d).setOnes();
      store.add(base + "/film_b", std::move(fb));
    }
  }
  add_linear(store, name("readout/hidden"), d, d, cfg_.bias, rng);
  add_linear(store, name("readout/out"), d, cfg_.output, cfg_.bias, rng);
}

Var Network::forward(Tape& tape, const NetworkInput& in, const ForwardMode& mode) const {
  return cfg_.kind == PriorKind::Mofo ? mofo_forward(tape, in, mode) : gnn_forward(tape, in, mode);
}

Var Network::mofo_forward(Tape& tape, const NetworkInput& in, const ForwardMode& mode) const {
  Var h = tape.constant(in.features);
  for (int l = 0; l < cfg_.layers; ++l) {
    Var next = activate(linear(tape, h, name("mofo/l" + std::to_string(l)), cfg_.bias), cfg_.activation);
    if (cfg_.skip > 0 && l > 0 && (l + 1) % cfg_.skip == 0) next = next + h;
    h = dropout(tape, next, cfg_.dropout, mode);
  }
  return linear(tape, h, name("mofo/out"), cfg_.bias);
}

Var Network::film_layer(Tape& tape, Var h, const GraphBatch& g, int layer, const ForwardMode& mode) const {
  const int d = cfg_.width;
  Var bond_embed = tape.param(name("gnn/bond_embed"));
  Var total{};
  for (std::size_t e = 0; e < kEdgeTypes; ++e) {
    const auto& list = g.edges[e];
    if (list.src.empty()) continue;
    const std::string base = name(layer_name(layer, e));

    Var hs = diff::gather_rows(h, list.src);
    if (e != kSelfLoop) {
      const std::array<int, 1> row{static_cast<int>(e)};
      hs = hs + diff::gather_rows(bond_embed, row);
    }
    Var transformed = diff::matmul(hs, tape.param(base + "/w"));

    Var ht = diff::gather_rows(h, list.dst);
    Var film = diff::matmul(ht, tape.param(base + "/film_w")) + tape.param(base + "/film_b");
    Var gamma = diff::slice_cols(film, 0, d);
    Var beta = diff::slice_cols(film, d, d);

    Var agg = diff::scatter_add_rows(gamma * transformed + beta, list.dst, g.num_nodes);
    if (cfg_.aggregation == Aggregation::Mean) agg = agg * tape.constant(list.inv_in_degree);
    total = total.tape ? total + agg : agg;
  }
  Var out = activate(total, cfg_.activation);
  if (cfg_.skip > 0 && (layer + 1) % cfg_.skip == 0) out = out + h;
  if (layer + 1 < cfg_.layers) out = dropout(tape, out, cfg_.dropout, mode);
  return out;
}

Var Network::node_features(Tape& tape, const NetworkInput& in, const ForwardMode& mode) const {
  if (cfg_.kind != PriorKind::Gnn) throw std::logic_error("node_features requires a GNN network");
  const GraphBatch& g = in.graphs;
  Var h = diff::gather_rows(tape.param(name("gnn/atom_embed")), g.atom_type);
  for (int l = 0; l < cfg_.layers; ++l) h = film_layer(tape, h, g, l, mode);
  return h;
}

Var Network::gnn_forward(Tape& tape, const NetworkInput& in, const ForwardMode& mode) const {
  const GraphBatch& g = in.graphs;
  if (g.num_graphs != in.count()) throw std::invalid_argument("graph batch does not match feature rows");
  Var h = node_features(tape, in, mode);
  Var pooled = diff::scatter_add_rows(h, g.graph_of_node, g.num_graphs);
  if (cfg_.aggregation == Aggregation::Mean) pooled = pooled * tape.constant(g.inv_graph_size);
  Var hidden = activate(linear(tape, pooled, name("readout/hidden"), cfg_.bias), cfg_.activation);
  hidden = dropout(tape, hidden, cfg_.dropout, mode);
  return linear(tape, hidden, name("readout/out"), cfg_.bias);
}

GaussianVars gaussian_head(Var out, int latent_dim) {
  if (out.cols() != 2 * latent_dim) throw std::invalid_argument("prior output width must be 2K");
  return {diff::slice_cols(out, 0, latent_dim),
          diff::softplus(diff::slice_cols(out, latent_dim, latent_dim)) + kVarianceFloor};
}

Matrix evaluate_outputs(const Network& net, const ParamStore& store, const NetworkInput& in) {
  // Forward-only: the tape never writes to the store without backward().
  Tape tape(const_cast<ParamStore*>(&store));
  return net.forward(tape, in).value();
}

std::vector<DiagGaussian> evaluate_priors(const Network& net, const ParamStore& store, const NetworkInput& in) {
  const Matrix out = evaluate_outputs(net, store, in);
  if (out.cols() % 2 != 0) throw std::invalid_argument("prior output width must be even");
  const Eigen::Index k = out.cols() / 2;
  std::vector<DiagGaussian> result(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto& p = result[static_cast<std::size_t>(r)];
    p.mean = out.row(r).head(k).transpose();
    p.variance = out.row(r).tail(k).transpose().unaryExpr([](double x) {
      return (x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x))) + kVarianceFloor;
    });
  }
  return result;
}

DiagGaussian mofo_prior(const Network& net, const ParamStore& store, const mol::FormulaCounts& features) {
  NetworkInput in;
  in.features.resize(1, mol::kFormulaFeatures);
  for (std::size_t c = 0; c < mol::kFormulaFeatures; ++c) in.features(0, static_cast<Eigen::Index>(c)) = features.counts[c];
  return evaluate_priors(net, store, in).front();
}

DiagGaussian gnn_prior(const Network& net, const ParamStore& store, const mol::MoleculeGraph& graph) {
  NetworkInput in;
  in.features = Matrix::Zero(1, mol::kFormulaFeatures);
  in.graphs = GraphBatch::build({&graph});
  return evaluate_priors(net, store, in).front();
}

} // namespace mcm::priors

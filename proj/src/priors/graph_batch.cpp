#include "mcm/priors/graph_batch.hpp"

namespace mcm::priors {

GraphBatch GraphBatch::build(const std::vector<const mol::MoleculeGraph*>& graphs) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  b.inv_graph_size.resize(b.num_graphs);
  for (int g = 0; g < b.num_graphs; ++g) {
    const auto& mg = *graphs[static_cast<std::size_t>(g)];
    const int offset = b.num_nodes;
    for (mol::Atom a : mg.atoms()) {
      b.atom_type.push_back(static_cast<int>(mol::index(a)));
      b.graph_of_node.push_back(g);
    }
    for (const auto& e : mg.edges()) {
      auto& list = b.edges[mol::index(e.type)];
      list.src.push_back(offset + e.src);
      list.dst.push_back(offset + e.dst);
    }
    b.num_nodes += static_cast<int>(mg.atom_count());
    b.inv_graph_size(g) = 1.0 / static_cast<double>(mg.atom_count());
  }

  auto& self = b.edges[kSelfLoop];
  for (int v = 0; v < b.num_nodes; ++v) {
    self.src.push_back(v);
    self.dst.push_back(v);
  }

  for (auto& list : b.edges) {
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(b.num_nodes);
    for (int d : list.dst) deg(d) += 1.0;
    list.inv_in_degree = deg.unaryExpr([](double x) { return x > 0.0 ? 1.0 / x : 0.0; });
  }
  return b;
}

} // namespace mcm::priors

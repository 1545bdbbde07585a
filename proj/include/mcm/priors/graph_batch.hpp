#pragma once

#include "mcm/mol/molecule.hpp"

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace mcm::priors {

/// Number of GNN edge types: the four bond types plus a self-loop type.
inline constexpr std::size_t kEdgeTypes = mol::kBondTypes + 1;
inline constexpr std::size_t kSelfLoop = mol::kBondTypes;

/// Disjoint union of molecule graphs, laid out for batched message passing.
/// Node ids are global across the batch; each edge list is grouped by type.
struct GraphBatch {
  struct EdgeList {
    std::vector<int> src;
    std::vector<int> dst;
    /// 1 / (in-degree of dst for this type), 0 where a node has no edges.
    Eigen::VectorXd inv_in_degree;
  };

  int num_nodes = 0;
  int num_graphs = 0;
  std::vector<int> atom_type;
  std::vector<int> graph_of_node;
  Eigen::VectorXd inv_graph_size;
  std::array<EdgeList, kEdgeTypes> edges;

  static GraphBatch build(const std::vector<const mol::MoleculeGraph*>& graphs);
};

} // namespace mcm::priors

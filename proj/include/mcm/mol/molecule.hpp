#pragma once

#include "mcm/errors.hpp"
#include "mcm/mol/vocab.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcm::mol {

using AtomCounts = std::array<int, kAtomTypes>;

/// 12 atom counts followed by 4 undirected bond-type counts.
struct FormulaCounts {
  std::array<int, kFormulaFeatures> counts{};

  int atoms(Atom a) const { return counts[index(a)]; }
  int bonds(Bond b) const { return counts[kAtomTypes + index(b)]; }

  /// Throws DataError unless all counts are nonnegative and some atom count is positive.
  void validate() const;

  friend bool operator==(const FormulaCounts&, const FormulaCounts&) = default;
};

struct BondSpec {
  int a = 0;
  int b = 0;
  Bond type = Bond::Single;
};

struct DirectedEdge {
  int src = 0;
  int dst = 0;
  Bond type = Bond::Single;
};

class GraphError : public ParseError {
public:
  enum class Kind { Empty, IndexOutOfRange, SelfBond, DuplicateBond, Disconnected };

  GraphError(Kind kind, const std::string& what) : ParseError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

/// Typed atoms plus every undirected bond stored as two directed edges of
/// equal type. Construction validates: nonempty, indices in range, no self
/// bonds, no duplicate bonds, single connected component.
class MoleculeGraph {
public:
  MoleculeGraph(std::vector<Atom> atoms, const std::vector<BondSpec>& bonds);

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::vector<DirectedEdge>& edges() const noexcept { return edges_; }
  std::size_t atom_count() const noexcept { return atoms_.size(); }
  std::size_t bond_count() const noexcept { return edges_.size() / 2; }
  /// Undirected bonds with a < b, in insertion order.
  std::vector<BondSpec> bonds() const;

  /// Relabels nodes: new index of old node i is perm[i].
  MoleculeGraph permuted(const std::vector<int>& perm) const;

private:
  std::vector<Atom> atoms_;
  std::vector<DirectedEdge> edges_;
};

/// Sorted per-atom (element, sorted neighbor (element, bond)) signatures.
/// Equal for isomorphic graphs; used as an isomorphism screen in tests and tools.
std::vector<std::string> graph_signature(const MoleculeGraph& g);

/// "H2O" style formula over the atom vocabulary. Throws ParseError with the
/// character position on unknown symbols or zero counts.
AtomCounts parse_formula(std::string_view text);

/// Explicit record: "atoms=H,O,H;bonds=0-1:1,1-2:1" (bond codes 1..4).
MoleculeGraph parse_graph(std::string_view text);
std::string format_graph(const MoleculeGraph& g);

/// Restricted SMILES: organic subset C N O S P F Cl Br I, aromatic c n o s,
/// bracket atoms [Si] [Sn] [H], bonds - = #, branches and ring digits 1-9.
/// Implicit hydrogens are added as explicit H nodes.
MoleculeGraph parse_smiles(std::string_view text);

FormulaCounts mofo_features(const MoleculeGraph& g);

enum class RecordKind { Formula, Smiles, Graph };

struct Molecule {
  std::string id;
  RecordKind kind = RecordKind::Graph;
  std::string payload;
  std::optional<MoleculeGraph> graph;
  FormulaCounts features;
};

/// Parses a structure reference given on a command line or in a record:
/// kind + payload. FORMULA records carry atom counts only (bond counts 0).
Molecule make_molecule(std::string id, RecordKind kind, std::string_view payload);

/// Id -> molecule map read from the tab-separated molecules file.
class MoleculeLibrary {
public:
  void add(Molecule m);
  bool contains(std::string_view id) const;
  const Molecule& at(std::string_view id) const;
  std::size_t size() const noexcept { return by_id_.size(); }
  const std::map<std::string, Molecule, std::less<>>& all() const noexcept { return by_id_; }

  static MoleculeLibrary read(std::istream& in);
  static MoleculeLibrary load(const std::string& path);
  void write(std::ostream& out) const;

private:
  std::map<std::string, Molecule, std::less<>> by_id_;
  std::vector<std::string> order_;
};

} // namespace mcm::mol

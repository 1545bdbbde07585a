#include "mcm/mol/molecule.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

namespace mcm::mol {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_int(std::string_view s, const char* what) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(std::string("invalid ") + what + ": '" + std::string(s) + "'");
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

} // namespace

void FormulaCounts::validate() const {
  bool any_atom = false;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) throw DataError("formula counts must be nonnegative");
    if (i < kAtomTypes && counts[i] > 0) any_atom = true;
  }
  if (!any_atom) throw DataError("formula counts contain no atoms");
}

MoleculeGraph::MoleculeGraph(std::vector<Atom> atoms, const std::vector<BondSpec>& bonds)
    : atoms_(std::move(atoms)) {
  const int n = static_cast<int>(atoms_.size());
  if (n == 0) throw GraphError(GraphError::Kind::Empty, "graph has no atoms");

  std::set<std::pair<int, int>> seen;
  edges_.reserve(bonds.size() * 2);
  for (std::size_t k = 0; k < bonds.size(); ++k) {
    const auto& b = bonds[k];
    if (b.a < 0 || b.a >= n || b.b < 0 || b.b >= n) {
      throw GraphError(GraphError::Kind::IndexOutOfRange,
                       "bond " + std::to_string(k) + " references atom outside [0, " + std::to_string(n) + ")");
    }
    if (b.a == b.b) {
      throw GraphError(GraphError::Kind::SelfBond, "bond " + std::to_string(k) + " is a self-bond on atom " +
                                                       std::to_string(b.a));
    }
    if (!seen.emplace(std::min(b.a, b.b), std::max(b.a, b.b)).second) {
      throw GraphError(GraphError::Kind::DuplicateBond, "duplicate bond between atoms " + std::to_string(b.a) +
                                                            " and " + std::to_string(b.b));
    }
    edges_.push_back({b.a, b.b, b.type});
    edges_.push_back({b.b, b.a, b.type});
  }

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& e : edges_) adj[static_cast<std::size_t>(e.src)].push_back(e.dst);
  std::vector<char> visited(static_cast<std::size_t>(n), 0);
  std::vector<int> stack = {0};
  visited[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[static_cast<std::size_t>(v)]) {
      if (visited[static_cast<std::size_t>(w)]) continue;
      visited[static_cast<std::size_t>(w)] = 1;
      ++reached;
      stack.push_back(w);
    }
  }
  if (reached != n) {
    throw GraphError(GraphError::Kind::Disconnected,
                     "graph is disconnected (" + std::to_string(reached) + " of " + std::to_string(n) + " atoms reachable)");
  }
}

std::vector<BondSpec> MoleculeGraph::bonds() const {
  std::vector<BondSpec> out;
  out.reserve(edges_.size() / 2);
  for (std::size_t k = 0; k < edges_.size(); k += 2) {
    const auto& e = edges_[k];
    out.push_back({std::min(e.src, e.dst), std::max(e.src, e.dst), e.type});
  }
  return out;
}

MoleculeGraph MoleculeGraph::permuted(const std::vector<int>& perm) const {
  if (perm.size() != atoms_.size()) throw std::invalid_argument("permutation size mismatch");
  std::vector<Atom> atoms(atoms_.size());
  for (std::size_t i = 0; i < atoms_.size(); ++i) atoms.at(static_cast<std::size_t>(perm[i])) = atoms_[i];
  std::vector<BondSpec> bonds;
  for (const auto& b : this->bonds()) {
    bonds.push_back({perm[static_cast<std::size_t>(b.a)], perm[static_cast<std::size_t>(b.b)], b.type});
  }
  return MoleculeGraph(std::move(atoms), bonds);
}

std::vector<std::string> graph_signature(const MoleculeGraph& g) {
  std::vector<std::vector<std::string>> nbrs(g.atom_count());
  for (const auto& e : g.edges()) {
    nbrs[static_cast<std::size_t>(e.src)].push_back(std::string(symbol(g.atoms()[static_cast<std::size_t>(e.dst)])) +
                                                    ":" + std::to_string(bond_code(e.type)));
  }
  std::vector<std::string> sig;
  sig.reserve(g.atom_count());
  for (std::size_t i = 0; i < g.atom_count(); ++i) {
    std::sort(nbrs[i].begin(), nbrs[i].end());
    std::string s(symbol(g.atoms()[i]));
    s += "[";
    for (const auto& n : nbrs[i]) s += n + ",";
    s += "]";
    sig.push_back(std::move(s));
  }
  std::sort(sig.begin(), sig.end());
  return sig;
}

AtomCounts parse_formula(std::string_view text) {
  AtomCounts counts{};
  if (text.empty()) throw ParseError("empty formula", 0);
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    if (!std::isupper(static_cast<unsigned char>(text[i]))) {
      throw ParseError("expected element symbol at position " + std::to_string(i), i);
    }
    ++i;
    while (i < text.size() && std::islower(static_cast<unsigned char>(text[i]))) ++i;
    const std::string_view sym = text.substr(start, i - start);
    const auto atom = atom_from_symbol(sym);
    if (!atom) {
      throw ParseError("unknown element symbol '" + std::string(sym) + "' at position " + std::to_string(start), start);
    }
    const std::size_t num_start = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    int n = 1;
    if (i > num_start) {
      n = parse_int(text.substr(num_start, i - num_start), "count");
      if (n == 0) throw ParseError("zero count at position " + std::to_string(num_start), num_start);
    }
    counts[index(*atom)] += n;
  }
  return counts;
}

MoleculeGraph parse_graph(std::string_view text) {
  std::optional<std::string_view> atoms_part, bonds_part;
  for (auto field : split(text, ';')) {
    field = trim(field);
    if (field.starts_with("atoms=")) atoms_part = field.substr(6);
    else if (field.starts_with("bonds=")) bonds_part = field.substr(6);
    else throw ParseError("unexpected graph field '" + std::string(field) + "'");
  }
  if (!atoms_part) throw ParseError("graph record lacks atoms=");

  std::vector<Atom> atoms;
  for (auto sym : split(*atoms_part, ',')) {
    sym = trim(sym);
    const auto a = atom_from_symbol(sym);
    if (!a) throw ParseError("unknown atom symbol '" + std::string(sym) + "' in graph record", atoms.size());
    atoms.push_back(*a);
  }

  std::vector<BondSpec> bonds;
  if (bonds_part && !trim(*bonds_part).empty()) {
    for (auto item : split(*bonds_part, ',')) {
      item = trim(item);
      const auto colon = item.find(':');
      const auto dash = item.find('-');
      if (colon == std::string_view::npos || dash == std::string_view::npos || dash > colon) {
        throw ParseError("malformed bond '" + std::string(item) + "', expected a-b:type", bonds.size());
      }
      const int a = parse_int(item.substr(0, dash), "bond atom index");
      const int b = parse_int(item.substr(dash + 1, colon - dash - 1), "bond atom index");
      const auto type = bond_from_code(parse_int(item.substr(colon + 1), "bond type"));
      if (!type) throw ParseError("bond type code must be 1..4 in '" + std::string(item) + "'", bonds.size());
      bonds.push_back({a, b, *type});
    }
  }
  return MoleculeGraph(std::move(atoms), bonds);
}

std::string format_graph(const MoleculeGraph& g) {
  std::ostringstream os;
  os << "atoms=";
  for (std::size_t i = 0; i < g.atom_count(); ++i) os << (i ? "," : "") << symbol(g.atoms()[i]);
  os << ";bonds=";
  const auto bonds = g.bonds();
  for (std::size_t k = 0; k < bonds.size(); ++k) {
    os << (k ? "," : "") << bonds[k].a << "-" << bonds[k].b << ":" << bond_code(bonds[k].type);
  }
  return os.str();
}

FormulaCounts mofo_features(const MoleculeGraph& g) {
  FormulaCounts f;
  for (Atom a : g.atoms()) ++f.counts[index(a)];
  for (const auto& b : g.bonds()) ++f.counts[kAtomTypes + index(b.type)];
  return f;
}

Molecule make_molecule(std::string id, RecordKind kind, std::string_view payload) {
  Molecule m;
  m.id = std::move(id);
  m.kind = kind;
  m.payload = std::string(payload);
  switch (kind) {
    case RecordKind::Formula: {
      const AtomCounts atoms = parse_formula(payload);
      std::copy(atoms.begin(), atoms.end(), m.features.counts.begin());
      break;
    }
    case RecordKind::Smiles:
      m.graph = parse_smiles(payload);
      m.features = mofo_features(*m.graph);
      break;
    case RecordKind::Graph:
      m.graph = parse_graph(payload);
      m.features = mofo_features(*m.graph);
      break;
  }
  m.features.validate();
  return m;
}

void MoleculeLibrary::add(Molecule m) {
  if (by_id_.count(m.id) != 0) throw DataError("duplicate component id '" + m.id + "'");
  order_.push_back(m.id);
  by_id_.emplace(m.id, std::move(m));
}

bool MoleculeLibrary::contains(std::string_view id) const { return by_id_.find(id) != by_id_.end(); }

const Molecule& MoleculeLibrary::at(std::string_view id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw DataError("unknown component id '" + std::string(id) + "'");
  return it->second;
}

MoleculeLibrary MoleculeLibrary::read(std::istream& in) {
  MoleculeLibrary lib;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("molecules line " + std::to_string(line_no) + ": expected 3 tab-separated fields", line_no);
    }
    RecordKind kind;
    if (fields[1] == "FORMULA") kind = RecordKind::Formula;
    else if (fields[1] == "SMILES") kind = RecordKind::Smiles;
    else if (fields[1] == "GRAPH") kind = RecordKind::Graph;
    else throw ParseError("molecules line " + std::to_string(line_no) + ": unknown kind '" + std::string(fields[1]) + "'", line_no);
    const std::string id(trim(fields[0]));
    if (id.empty()) throw ParseError("molecules line " + std::to_string(line_no) + ": empty component id", line_no);
    std::optional<Molecule> m;
    try {
      m = make_molecule(id, kind, trim(fields[2]));
    } catch (const ParseError& e) {
      throw ParseError("molecules line " + std::to_string(line_no) + " (" + id + "): " + e.what(), line_no);
    } catch (const DataError& e) {
      throw ParseError("molecules line " + std::to_string(line_no) + " (" + id + "): " + e.what(), line_no);
    }
    lib.add(std::move(*m));
  }
  return lib;
}

MoleculeLibrary MoleculeLibrary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open molecules file '" + path + "'");
  return read(in);
}

void MoleculeLibrary::write(std::ostream& out) const {
  for (const auto& id : order_) {
    const Molecule& m = by_id_.at(id);
    const char* kind = m.kind == RecordKind::Formula ? "FORMULA" : m.kind == RecordKind::Smiles ? "SMILES" : "GRAPH";
    out << m.id << '\t' << kind << '\t' << m.payload << '\n';
  }
}

} // namespace mcm::mol

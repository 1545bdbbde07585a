#include "mcm/mol/molecule.hpp"

#include <array>
#include <cctype>
#include <optional>
#include <vector>

namespace mcm::mol {

namespace {

struct ParsedAtom {
  Atom atom;
  bool aromatic = false;
  std::size_t position = 0;
};

struct RingOpen {
  int atom = -1;
  std::optional<Bond> bond;
  std::size_t position = 0;
};

[[noreturn]] void fail(const std::string& msg, std::size_t pos) {
  throw ParseError("SMILES: " + msg + " at position " + std::to_string(pos), pos);
}

class SmilesParser {
public:
  explicit SmilesParser(std::string_view text) : text_(text) {}

  MoleculeGraph parse() {
    if (text_.empty()) fail("empty string", 0);
    std::vector<int> branch_stack;
    int prev = -1;
    std::optional<Bond> pending;
    std::size_t pending_pos = 0;

    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(') {
        if (prev < 0) fail("branch before any atom", pos_);
        branch_stack.push_back(prev);
        ++pos_;
      } else if (c == ')') {
        if (branch_stack.empty()) fail("unbalanced ')'", pos_);
        if (pending) fail("bond symbol before ')'", pending_pos);
        prev = branch_stack.back();
        branch_stack.pop_back();
        ++pos_;
      } else if (c == '-' || c == '=' || c == '#') {
        if (pending) fail("consecutive bond symbols", pos_);
        pending = c == '-' ? Bond::Single : c == '=' ? Bond::Double : Bond::Triple;
        pending_pos = pos_;
        ++pos_;
      } else if (c >= '1' && c <= '9') {
        if (prev < 0) fail("ring closure before any atom", pos_);
        ring_digit(c - '0', prev, pending);
        pending.reset();
        ++pos_;
      } else if (c == '0' || c == '%') {
        fail("unsupported ring closure label", pos_);
      } else {
        const int atom = read_atom();
        if (prev >= 0) {
          add_bond(prev, atom, pending, pos_);
        } else if (pending) {
          fail("bond symbol before first atom", pending_pos);
        }
        pending.reset();
        prev = atom;
      }
    }
    if (pending) fail("dangling bond symbol", pending_pos);
    if (!branch_stack.empty()) fail("unbalanced '('", text_.size());
    for (std::size_t d = 0; d < rings_.size(); ++d) {
      if (rings_[d]) fail("unclosed ring digit " + std::to_string(d), rings_[d]->position);
    }
    return build();
  }

private:
  int read_atom() {
    const std::size_t start = pos_;
    const char c = text_[pos_];
    if (c == '[') {
      const std::size_t close = text_.find(']', pos_);
      if (close == std::string_view::npos) fail("unterminated bracket atom", pos_);
      const std::string_view inner = text_.substr(pos_ + 1, close - pos_ - 1);
      std::optional<Atom> a;
      if (inner == "Si") a = Atom::Si;
      else if (inner == "Sn") a = Atom::Sn;
      else if (inner == "H") a = Atom::H;
      if (!a) fail("unsupported bracket atom [" + std::string(inner) + "]", start);
      pos_ = close + 1;
      return push_atom(*a, false, start);
    }
    if (c == 'C' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'l') {
      pos_ += 2;
      return push_atom(Atom::Cl, false, start);
    }
    if (c == 'B' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'r') {
      pos_ += 2;
      return push_atom(Atom::Br, false, start);
    }
    std::optional<Atom> a;
    bool aromatic = false;
    switch (c) {
      case 'C': a = Atom::C; break;
      case 'N': a = Atom::N; break;
      case 'O': a = Atom::O; break;
      case 'S': a = Atom::S; break;
      case 'P': a = Atom::P; break;
      case 'F': a = Atom::F; break;
      case 'I': a = Atom::I; break;
      case 'c': a = Atom::C; aromatic = true; break;
      case 'n': a = Atom::N; aromatic = true; break;
      case 'o': a = Atom::O; aromatic = true; break;
      case 's': a = Atom::S; aromatic = true; break;
      default: break;
    }
    if (!a) {
      if (c == '.' || c == '/' || c == '\\' || c == '@' || c == '+' || c == ':') {
        fail(std::string("unsupported feature '") + c + "'", start);
      }
      fail(std::string("unexpected character '") + c + "'", start);
    }
    ++pos_;
    return push_atom(*a, aromatic, start);
  }

  int push_atom(Atom a, bool aromatic, std::size_t position) {
    atoms_.push_back({a, aromatic, position});
    return static_cast<int>(atoms_.size()) - 1;
  }

  Bond resolve(int a, int b, std::optional<Bond> explicit_bond) const {
    if (explicit_bond) return *explicit_bond;
    if (atoms_[static_cast<std::size_t>(a)].aromatic && atoms_[static_cast<std::size_t>(b)].aromatic) {
      return Bond::Aromatic;
    }
    return Bond::Single;
  }

  void add_bond(int a, int b, std::optional<Bond> explicit_bond, std::size_t position) {
    for (const auto& existing : bonds_) {
      if ((existing.a == a && existing.b == b) || (existing.a == b && existing.b == a)) {
        fail("duplicate bond", position);
      }
    }
    if (a == b) fail("self-bond", position);
    bonds_.push_back({a, b, resolve(a, b, explicit_bond)});
  }

  void ring_digit(int digit, int atom, std::optional<Bond> bond) {
    auto& slot = rings_[static_cast<std::size_t>(digit)];
    if (!slot) {
      slot = RingOpen{atom, bond, pos_};
      return;
    }
    if (bond && slot->bond && *bond != *slot->bond) fail("conflicting ring-closure bond types", pos_);
    add_bond(slot->atom, atom, bond ? bond : slot->bond, pos_);
    slot.reset();
  }

  MoleculeGraph build() {
    // Bond order in units of half bonds so aromatic bonds stay integral.
    std::vector<int> used(atoms_.size(), 0);
    std::vector<int> aromatic_bonds(atoms_.size(), 0);
    for (const auto& b : bonds_) {
      for (int end : {b.a, b.b}) {
        const auto k = static_cast<std::size_t>(end);
        switch (b.type) {
          case Bond::Single: used[k] += 1; break;
          case Bond::Double: used[k] += 2; break;
          case Bond::Triple: used[k] += 3; break;
          case Bond::Aromatic: used[k] += 1; ++aromatic_bonds[k]; break;
        }
      }
    }

    std::vector<Atom> atoms;
    atoms.reserve(atoms_.size());
    for (const auto& a : atoms_) atoms.push_back(a.atom);
    std::vector<BondSpec> bonds = bonds_;

    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const ParsedAtom& pa = atoms_[k];
      int demand = used[k];
      // Aromatic c and n donate one electron to the ring pi system.
      if (pa.aromatic && aromatic_bonds[k] > 0 && (pa.atom == Atom::C || pa.atom == Atom::N)) demand += 1;
      const int valence = pick_valence(pa.atom, demand);
      if (valence < 0) {
        fail("valence exceeded for " + std::string(symbol(pa.atom)), pa.position);
      }
      for (int h = 0; h < valence - demand; ++h) {
        atoms.push_back(Atom::H);
        bonds.push_back({static_cast<int>(k), static_cast<int>(atoms.size()) - 1, Bond::Single});
      }
    }
    return MoleculeGraph(std::move(atoms), bonds);
  }

  /// Smallest allowed valence covering the demand; -1 when none does.
  /// Sulfur and phosphorus admit their hypervalent states.
  static int pick_valence(Atom a, int demand) {
    std::array<int, 3> allowed = {default_valence(a), -1, -1};
    if (a == Atom::S) allowed = {2, 4, 6};
    if (a == Atom::P) allowed = {3, 5, -1};
    for (int v : allowed) {
      if (v >= demand) return v;
    }
    return -1;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<ParsedAtom> atoms_;
  std::vector<BondSpec> bonds_;
  std::array<std::optional<RingOpen>, 10> rings_{};
};

} // namespace

MoleculeGraph parse_smiles(std::string_view text) { return SmilesParser(text).parse(); }

} // namespace mcm::mol

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace mcm::mol {

inline constexpr std::size_t kAtomTypes = 12;
inline constexpr std::size_t kBondTypes = 4;
inline constexpr std::size_t kFormulaFeatures = kAtomTypes + kBondTypes;

/// Atom vocabulary; the enumerator value is the feature index.
enum class Atom : std::uint8_t { O, Si, I, F, Br, P, H, S, Sn, N, C, Cl };

/// Bond vocabulary; file codes are value + 1.
enum class Bond : std::uint8_t { Single, Double, Triple, Aromatic };

inline constexpr std::array<std::string_view, kAtomTypes> kAtomSymbols = {
    "O", "Si", "I", "F", "Br", "P", "H", "S", "Sn", "N", "C", "Cl"};

inline constexpr std::array<std::string_view, kBondTypes> kBondNames = {
    "single", "double", "triple", "aromatic"};

constexpr std::size_t index(Atom a) noexcept { return static_cast<std::size_t>(a); }
constexpr std::size_t index(Bond b) noexcept { return static_cast<std::size_t>(b); }

constexpr std::string_view symbol(Atom a) noexcept { return kAtomSymbols[index(a)]; }

constexpr std::optional<Atom> atom_from_symbol(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kAtomTypes; ++i) {
    if (kAtomSymbols[i] == s) return static_cast<Atom>(i);
  }
  return std::nullopt;
}

constexpr std::optional<Bond> bond_from_code(int code) noexcept {
  if (code < 1 || code > static_cast<int>(kBondTypes)) return std::nullopt;
  return static_cast<Bond>(code - 1);
}

constexpr int bond_code(Bond b) noexcept { return static_cast<int>(b) + 1; }

/// Default valence used when filling implicit hydrogens.
constexpr int default_valence(Atom a) noexcept {
  switch (a) {
    case Atom::C:
    case Atom::Si:
    case Atom::Sn: return 4;
    case Atom::N:
    case Atom::P: return 3;
    case Atom::O:
    case Atom::S: return 2;
    case Atom::F:
    case Atom::Cl:
    case Atom::Br:
    case Atom::I:
    case Atom::H: return 1;
  }
  return 0;
}

} // namespace mcm::mol

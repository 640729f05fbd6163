#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slim/error.hpp"

namespace slim::chem {

enum class Element : std::uint8_t { C, N, O, S, F, Cl, Br };

inline constexpr Element kAllElements[] = {Element::C, Element::N,  Element::O, Element::S,
                                           Element::F, Element::Cl, Element::Br};

int valence(Element e);
double atomic_mass(Element e);
std::string_view symbol(Element e);
inline constexpr double kHydrogenMass = 1.008;

enum class ChemErrorKind {
  EmptyInput,
  UnknownSymbol,
  UnbalancedParenthesis,
  UnclosedRing,
  InvalidRingClosure,
  DanglingBond,
  ValenceViolation,
  Disconnected,
  NoRemovableAtom,
  NoAttachmentSite,
};

std::string_view to_string(ChemErrorKind kind);

class ChemError : public Error {
 public:
  ChemError(ChemErrorKind kind, const std::string& detail)
      : Error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}
  ChemErrorKind kind() const { return kind_; }

 private:
  ChemErrorKind kind_;
};

struct Atom {
  Element element = Element::C;
  int hydrogens = 0;
};

struct Bond {
  int a = 0;
  int b = 0;
  int order = 1;
  bool ring = false;

  int other(int atom) const { return atom == a ? b : a; }
};

struct Neighbor {
  int atom;
  int bond;
};

/// Heavy-atom graph with implicit hydrogens. Instances are always valid:
/// connected, within valence, ring flags equal to the non-bridge edges.
class Molecule {
 public:
  struct BondSpec {
    int a;
    int b;
    int order;
  };

  /// Validates and derives hydrogens and ring flags. Throws ChemError.
  static Molecule from_graph(std::vector<Element> elements, std::vector<BondSpec> bonds);

  std::size_t size() const { return atoms_.size(); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const Atom& atom(int i) const { return atoms_[static_cast<std::size_t>(i)]; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  std::span<const Neighbor> neighbors(int i) const { return adjacency_[static_cast<std::size_t>(i)]; }

  int heavy_degree(int i) const { return static_cast<int>(adjacency_[static_cast<std::size_t>(i)].size()); }
  int bond_order_sum(int i) const;
  bool in_ring(int i) const;
  /// Bond index between two atoms, or -1.
  int bond_between(int i, int j) const;

  std::vector<Element> elements() const;
  std::vector<BondSpec> bond_specs() const;

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

}  // namespace slim::chem

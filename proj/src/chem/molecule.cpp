#include "slim/chem/molecule.hpp"

#include <algorithm>
#include <functional>

namespace slim::chem {

int valence(Element e) {
  switch (e) {
    case Element::C: return 4;
    case Element::N: return 3;
    case Element::O: return 2;
    case Element::S: return 2;
    case Element::F:
    case Element::Cl:
    case Element::Br: return 1;
  }
  return 0;
}

double atomic_mass(Element e) {
  switch (e) {
    case Element::C: return 12.011;
    case Element::N: return 14.007;
    case Element::O: return 15.999;
    case Element::S: return 32.06;
    case Element::F: return 18.998;
    case Element::Cl: return 35.45;
    case Element::Br: return 79.904;
  }
  return 0.0;
}

std::string_view symbol(Element e) {
  switch (e) {
    case Element::C: return "C";
    case Element::N: return "N";
    case Element::O: return "O";
    case Element::S: return "S";
    case Element::F: return "F";
    case Element::Cl: return "Cl";
    case Element::Br: return "Br";
  }
  return "?";
}

std::string_view to_string(ChemErrorKind kind) {
  switch (kind) {
    case ChemErrorKind::EmptyInput: return "EmptyInput";
    case ChemErrorKind::UnknownSymbol: return "UnknownSymbol";
    case ChemErrorKind::UnbalancedParenthesis: return "UnbalancedParenthesis";
    case ChemErrorKind::UnclosedRing: return "UnclosedRing";
    case ChemErrorKind::InvalidRingClosure: return "InvalidRingClosure";
    case ChemErrorKind::DanglingBond: return "DanglingBond";
    case ChemErrorKind::ValenceViolation: return "ValenceViolation";
    case ChemErrorKind::Disconnected: return "Disconnected";
    case ChemErrorKind::NoRemovableAtom: return "NoRemovableAtom";
    case ChemErrorKind::NoAttachmentSite: return "NoAttachmentSite";
  }
  return "?";
}

Molecule Molecule::from_graph(std::vector<Element> elements, std::vector<BondSpec> bonds) {
  const int n = static_cast<int>(elements.size());
  if (n == 0) throw ChemError(ChemErrorKind::EmptyInput, "molecule has no atoms");

  Molecule m;
  m.atoms_.resize(elements.size());
  m.adjacency_.resize(elements.size());
  std::vector<int> used(elements.size(), 0);
  for (const BondSpec& b : bonds) {
    if (b.a < 0 || b.b < 0 || b.a >= n || b.b >= n || b.a == b.b) {
      throw ChemError(ChemErrorKind::InvalidRingClosure, "bond endpoints invalid");
    }
    if (b.order < 1 || b.order > 3) throw ChemError(ChemErrorKind::UnknownSymbol, "bond order");
    if (m.bond_between(b.a, b.b) >= 0) {
      throw ChemError(ChemErrorKind::InvalidRingClosure, "duplicate bond between atoms " +
                                                             std::to_string(b.a) + " and " +
                                                             std::to_string(b.b));
    }
    const int idx = static_cast<int>(m.bonds_.size());
    m.bonds_.push_back(Bond{b.a, b.b, b.order, false});
    m.adjacency_[static_cast<std::size_t>(b.a)].push_back({b.b, idx});
    m.adjacency_[static_cast<std::size_t>(b.b)].push_back({b.a, idx});
    used[static_cast<std::size_t>(b.a)] += b.order;
    used[static_cast<std::size_t>(b.b)] += b.order;
  }
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const int h = valence(elements[k]) - used[k];
    if (h < 0) {
      throw ChemError(ChemErrorKind::ValenceViolation,
                      "atom " + std::to_string(i) + " (" + std::string(symbol(elements[k])) +
                          ") has bond order sum " + std::to_string(used[k]));
    }
    m.atoms_[k] = Atom{elements[k], h};
  }

  // Connectivity, then bridges via low-link; every non-bridge edge lies on a cycle.
  std::vector<int> disc(elements.size(), -1);
  std::vector<int> low(elements.size(), 0);
  std::vector<bool> bridge(m.bonds_.size(), false);
  int timer = 0;
  std::function<void(int, int)> dfs = [&](int u, int parent_bond) {
    const auto ku = static_cast<std::size_t>(u);
    disc[ku] = low[ku] = timer++;
    for (const Neighbor& nb : m.adjacency_[ku]) {
      if (nb.bond == parent_bond) continue;
      const auto kv = static_cast<std::size_t>(nb.atom);
      if (disc[kv] < 0) {
        dfs(nb.atom, nb.bond);
        low[ku] = std::min(low[ku], low[kv]);
        if (low[kv] > disc[ku]) bridge[static_cast<std::size_t>(nb.bond)] = true;
      } else {
        low[ku] = std::min(low[ku], disc[kv]);
      }
    }
  };
  dfs(0, -1);
  if (timer != n) throw ChemError(ChemErrorKind::Disconnected, "molecule graph is disconnected");
  for (std::size_t b = 0; b < m.bonds_.size(); ++b) m.bonds_[b].ring = !bridge[b];
  return m;
}

int Molecule::bond_order_sum(int i) const {
  int s = 0;
  for (const Neighbor& nb : neighbors(i)) s += bonds_[static_cast<std::size_t>(nb.bond)].order;
  return s;
}

bool Molecule::in_ring(int i) const {
  for (const Neighbor& nb : neighbors(i)) {
    if (bonds_[static_cast<std::size_t>(nb.bond)].ring) return true;
  }
  return false;
}

int Molecule::bond_between(int i, int j) const {
  if (i < 0 || static_cast<std::size_t>(i) >= adjacency_.size()) return -1;
  for (const Neighbor& nb : adjacency_[static_cast<std::size_t>(i)]) {
    if (nb.atom == j) return nb.bond;
  }
  return -1;
}

std::vector<Element> Molecule::elements() const {
  std::vector<Element> out;
  out.reserve(atoms_.size());
  for (const Atom& a : atoms_) out.push_back(a.element);
  return out;
}

std::vector<Molecule::BondSpec> Molecule::bond_specs() const {
  std::vector<BondSpec> out;
  out.reserve(bonds_.size());
  for (const Bond& b : bonds_) out.push_back({b.a, b.b, b.order});
  return out;
}

}  // namespace slim::chem

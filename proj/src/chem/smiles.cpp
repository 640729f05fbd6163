#include "slim/chem/smiles.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <optional>
#include <vector>

namespace slim::chem {

namespace {

struct OpenRing {
  int atom = -1;
  int order = 0;  // 0: unspecified at the opening side
};

std::string at(std::size_t pos) { return " at position " + std::to_string(pos); }

char bond_symbol(int order) {
  switch (order) {
    case 2: return '=';
    case 3: return '#';
    default: return '\0';
  }
}

}  // namespace

Molecule parse_smiles(std::string_view text) {
  if (text.empty()) throw ChemError(ChemErrorKind::EmptyInput, "empty SMILES");

  std::vector<Element> elements;
  std::vector<Molecule::BondSpec> bonds;
  std::vector<int> branch_stack;
  std::vector<std::size_t> branch_start_atoms;
  std::array<std::optional<OpenRing>, 10> rings{};
  int prev = -1;
  int pending = 0;

  auto has_bond = [&](int a, int b) {
    return std::any_of(bonds.begin(), bonds.end(), [&](const Molecule::BondSpec& s) {
      return (s.a == a && s.b == b) || (s.a == b && s.b == a);
    });
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    std::optional<Element> el;
    switch (ch) {
      case 'C':
        if (i + 1 < text.size() && text[i + 1] == 'l') {
          el = Element::Cl;
          ++i;
        } else {
          el = Element::C;
        }
        break;
      case 'B':
        if (i + 1 < text.size() && text[i + 1] == 'r') {
          el = Element::Br;
          ++i;
        } else {
          throw ChemError(ChemErrorKind::UnknownSymbol, "'B'" + at(i));
        }
        break;
      case 'N': el = Element::N; break;
      case 'O': el = Element::O; break;
      case 'S': el = Element::S; break;
      case 'F': el = Element::F; break;
      case '-':
      case '=':
      case '#':
        if (prev < 0 || pending != 0) throw ChemError(ChemErrorKind::DanglingBond, std::string(1, ch) + at(i));
        pending = ch == '-' ? 1 : (ch == '=' ? 2 : 3);
        continue;
      case '(':
        if (prev < 0) throw ChemError(ChemErrorKind::UnbalancedParenthesis, "branch without an atom" + at(i));
        if (pending != 0) throw ChemError(ChemErrorKind::DanglingBond, "bond before '('" + at(i));
        branch_stack.push_back(prev);
        branch_start_atoms.push_back(elements.size());
        continue;
      case ')':
        if (branch_stack.empty()) throw ChemError(ChemErrorKind::UnbalancedParenthesis, "')'" + at(i));
        if (pending != 0) throw ChemError(ChemErrorKind::DanglingBond, "bond before ')'" + at(i));
        if (branch_start_atoms.back() == elements.size()) {
          throw ChemError(ChemErrorKind::UnbalancedParenthesis, "empty branch" + at(i));
        }
        prev = branch_stack.back();
        branch_stack.pop_back();
        branch_start_atoms.pop_back();
        continue;
      default:
        if (ch >= '1' && ch <= '9') {
          if (prev < 0) throw ChemError(ChemErrorKind::InvalidRingClosure, "ring digit without an atom" + at(i));
          auto& slot = rings[static_cast<std::size_t>(ch - '0')];
          if (slot) {
            const int partner = slot->atom;
            if (slot->order != 0 && pending != 0 && slot->order != pending) {
              throw ChemError(ChemErrorKind::InvalidRingClosure, "conflicting ring bond orders" + at(i));
            }
            const int order = pending != 0 ? pending : (slot->order != 0 ? slot->order : 1);
            if (partner == prev || has_bond(partner, prev)) {
              throw ChemError(ChemErrorKind::InvalidRingClosure, "ring closure onto bonded atom" + at(i));
            }
            bonds.push_back({partner, prev, order});
            slot.reset();
          } else {
            slot = OpenRing{prev, pending};
          }
          pending = 0;
          continue;
        }
        throw ChemError(ChemErrorKind::UnknownSymbol, "'" + std::string(1, ch) + "'" + at(i));
    }
    const int idx = static_cast<int>(elements.size());
    elements.push_back(*el);
    if (prev >= 0) bonds.push_back({prev, idx, pending != 0 ? pending : 1});
    pending = 0;
    prev = idx;
  }

  if (pending != 0) throw ChemError(ChemErrorKind::DanglingBond, "trailing bond symbol");
  if (!branch_stack.empty()) throw ChemError(ChemErrorKind::UnbalancedParenthesis, "unclosed '('");
  for (std::size_t d = 1; d < rings.size(); ++d) {
    if (rings[d]) throw ChemError(ChemErrorKind::UnclosedRing, "ring " + std::to_string(d));
  }
  if (elements.empty()) throw ChemError(ChemErrorKind::EmptyInput, "no atoms");
  return Molecule::from_graph(std::move(elements), std::move(bonds));
}

std::string to_smiles(const Molecule& mol) {
  const int n = static_cast<int>(mol.size());
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
  // Ring-closure bonds listed at the atom written first (opening) and at the
  // atom written second (closing), each in discovery order.
  std::vector<std::vector<int>> ring_events(static_cast<std::size_t>(n));
  std::vector<bool> visited(static_cast<std::size_t>(n), false);
  std::vector<bool> bond_seen(mol.bonds().size(), false);

  std::function<void(int)> explore = [&](int u) {
    visited[static_cast<std::size_t>(u)] = true;
    std::vector<Neighbor> nbrs(mol.neighbors(u).begin(), mol.neighbors(u).end());
    std::sort(nbrs.begin(), nbrs.end(), [](const Neighbor& x, const Neighbor& y) { return x.atom < y.atom; });
    for (const Neighbor& nb : nbrs) {
      const auto b = static_cast<std::size_t>(nb.bond);
      if (bond_seen[b]) continue;
      bond_seen[b] = true;
      if (visited[static_cast<std::size_t>(nb.atom)]) {
        ring_events[static_cast<std::size_t>(nb.atom)].push_back(nb.bond);
        ring_events[static_cast<std::size_t>(u)].push_back(nb.bond);
      } else {
        children[static_cast<std::size_t>(u)].push_back(nb.atom);
        explore(nb.atom);
      }
    }
  };
  explore(0);

  std::string out;
  std::vector<int> digit_of_bond(mol.bonds().size(), 0);
  std::array<bool, 10> digit_busy{};

  std::function<void(int)> emit = [&](int u) {
    out += symbol(mol.atom(u).element);
    for (int b : ring_events[static_cast<std::size_t>(u)]) {
      auto& d = digit_of_bond[static_cast<std::size_t>(b)];
      if (d == 0) {
        int free = 1;
        while (free < 10 && digit_busy[static_cast<std::size_t>(free)]) ++free;
        if (free == 10) throw Error("to_smiles: more than 9 simultaneous ring closures");
        digit_busy[static_cast<std::size_t>(free)] = true;
        d = free;
        if (char s = bond_symbol(mol.bonds()[static_cast<std::size_t>(b)].order)) out += s;
        out += static_cast<char>('0' + d);
      } else {
        out += static_cast<char>('0' + d);
        digit_busy[static_cast<std::size_t>(d)] = false;
      }
    }
    const auto& kids = children[static_cast<std::size_t>(u)];
    for (std::size_t c = 0; c < kids.size(); ++c) {
      const int v = kids[c];
      const char s = bond_symbol(mol.bonds()[static_cast<std::size_t>(mol.bond_between(u, v))].order);
      const bool branch = c + 1 < kids.size();
      if (branch) out += '(';
      if (s) out += s;
      emit(v);
      if (branch) out += ')';
    }
  };
  emit(0);
  return out;
}

}  // namespace slim::chem

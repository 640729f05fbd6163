#include "slim/chem/edit.hpp"

namespace slim::chem {

namespace {

struct FragmentAtom {
  Element element;
  int hydrogens;  // after attachment
};

/// Fragment hung off the site: first atom bonds to the site with
/// `attach_order`; any further atoms form a single-bonded chain.
struct Fragment {
  std::vector<FragmentAtom> atoms;
  int attach_order = 1;
};

Fragment fragment_for(const EditAction& a) {
  switch (a.kind) {
    case EditKind::AppendAtom:
      return {{{a.element, valence(a.element) - 1}}, 1};
    case EditKind::AppendCarbonyl:
      return {{{Element::O, 0}}, 2};
    case EditKind::AppendHydroxyl:
      return {{{Element::O, 1}}, 1};
    case EditKind::AppendAmine:
      return {{{Element::N, 2}}, 1};
    case EditKind::AppendHalogen:
      return {{{a.element, 0}}, 1};
    case EditKind::ExtendChain:
      return {{{Element::C, 2}, {Element::C, 3}}, 1};
    default:
      return {};
  }
}

bool is_polar(Element e) { return e == Element::N || e == Element::O; }

int terminal_atom(const Molecule& mol) {
  if (mol.size() < 2) return -1;
  for (int i = static_cast<int>(mol.size()) - 1; i >= 0; --i) {
    if (mol.heavy_degree(i) == 1) return i;
  }
  return -1;
}

/// 1 if the single, acyclic bond `b` has both endpoints at heavy degree >= 2
/// once `atom`'s degree is replaced by `atom_degree`.
int rotatable_with(const Molecule& mol, const Bond& b, int atom, int atom_degree) {
  const int da = b.a == atom ? atom_degree : mol.heavy_degree(b.a);
  const int db = b.b == atom ? atom_degree : mol.heavy_degree(b.b);
  return b.order == 1 && !b.ring && da >= 2 && db >= 2;
}

}  // namespace

std::string EditAction::label() const {
  switch (kind) {
    case EditKind::AppendAtom: return "append_atom(" + std::string(symbol(element)) + ")";
    case EditKind::AppendCarbonyl: return "append_carbonyl";
    case EditKind::AppendHydroxyl: return "append_hydroxyl";
    case EditKind::AppendAmine: return "append_amine";
    case EditKind::AppendHalogen: return "append_halogen(" + std::string(symbol(element)) + ")";
    case EditKind::ExtendChain: return "extend_chain";
    case EditKind::DeleteTerminalAtom: return "delete_terminal_atom";
    case EditKind::NoOp: return "no_op";
  }
  return "?";
}

const std::vector<EditAction>& standard_catalog() {
  static const std::vector<EditAction> catalog = {
      {EditKind::AppendAtom, Element::C},
      {EditKind::AppendAtom, Element::N},
      {EditKind::AppendAtom, Element::O},
      {EditKind::AppendAtom, Element::S},
      {EditKind::AppendCarbonyl, Element::O},
      {EditKind::AppendHydroxyl, Element::O},
      {EditKind::AppendAmine, Element::N},
      {EditKind::AppendHalogen, Element::F},
      {EditKind::AppendHalogen, Element::Cl},
      {EditKind::AppendHalogen, Element::Br},
      {EditKind::ExtendChain, Element::C},
      {EditKind::DeleteTerminalAtom, Element::C},
      {EditKind::NoOp, Element::C},
  };
  return catalog;
}

int attachment_site(const Molecule& mol, const EditAction& action) {
  switch (action.kind) {
    case EditKind::NoOp:
      return 0;
    case EditKind::DeleteTerminalAtom:
      return terminal_atom(mol);
    case EditKind::AppendAtom:
      if (action.element != Element::C && action.element != Element::N && action.element != Element::O &&
          action.element != Element::S) {
        throw Error("append_atom supports C, N, O, S");
      }
      break;
    case EditKind::AppendHalogen:
      if (action.element != Element::F && action.element != Element::Cl && action.element != Element::Br) {
        throw Error("append_halogen supports F, Cl, Br");
      }
      break;
    default:
      break;
  }
  const Fragment frag = fragment_for(action);
  const bool carbon_only = action.kind != EditKind::AppendAtom;
  for (int i = static_cast<int>(mol.size()) - 1; i >= 0; --i) {
    const Atom& a = mol.atom(i);
    if (carbon_only && a.element != Element::C) continue;
    if (a.hydrogens >= frag.attach_order) return i;
  }
  return -1;
}

bool is_feasible(const Molecule& mol, const EditAction& action) { return attachment_site(mol, action) >= 0; }

Molecule apply_edit(const Molecule& mol, const EditAction& action) {
  const int site = attachment_site(mol, action);
  if (action.kind == EditKind::NoOp) return mol;
  if (site < 0) {
    if (action.kind == EditKind::DeleteTerminalAtom) {
      throw ChemError(ChemErrorKind::NoRemovableAtom, "no terminal atom to delete");
    }
    throw ChemError(ChemErrorKind::NoAttachmentSite, action.label() + " has no eligible site");
  }

  std::vector<Element> elements = mol.elements();
  std::vector<Molecule::BondSpec> bonds = mol.bond_specs();
  if (action.kind == EditKind::DeleteTerminalAtom) {
    elements.erase(elements.begin() + site);
    std::vector<Molecule::BondSpec> kept;
    for (auto b : bonds) {
      if (b.a == site || b.b == site) continue;
      if (b.a > site) --b.a;
      if (b.b > site) --b.b;
      kept.push_back(b);
    }
    return Molecule::from_graph(std::move(elements), std::move(kept));
  }

  const Fragment frag = fragment_for(action);
  int prev = site;
  for (std::size_t k = 0; k < frag.atoms.size(); ++k) {
    const int idx = static_cast<int>(elements.size());
    elements.push_back(frag.atoms[k].element);
    bonds.push_back({prev, idx, k == 0 ? frag.attach_order : 1});
    prev = idx;
  }
  return Molecule::from_graph(std::move(elements), std::move(bonds));
}

PropertyDeltas declared_delta(const Molecule& mol, const EditAction& action) {
  PropertyDeltas d{};
  auto& mw = d[static_cast<std::size_t>(Property::MW)];
  auto& hba = d[static_cast<std::size_t>(Property::HBA)];
  auto& hbd = d[static_cast<std::size_t>(Property::HBD)];
  auto& rot = d[static_cast<std::size_t>(Property::RotBond)];
  auto& logp = d[static_cast<std::size_t>(Property::LogPHat)];
  if (action.kind == EditKind::NoOp) return d;

  const int site = attachment_site(mol, action);
  if (site < 0) {
    throw ChemError(action.kind == EditKind::DeleteTerminalAtom ? ChemErrorKind::NoRemovableAtom
                                                                : ChemErrorKind::NoAttachmentSite,
                    action.label() + " infeasible");
  }

  if (action.kind == EditKind::DeleteTerminalAtom) {
    const Atom& gone = mol.atom(site);
    const Neighbor nb = mol.neighbors(site)[0];
    const Bond& link = mol.bonds()[static_cast<std::size_t>(nb.bond)];
    const Atom& anchor = mol.atom(nb.atom);
    mw = -(atomic_mass(gone.element) + gone.hydrogens * kHydrogenMass) + link.order * kHydrogenMass;
    hba = -static_cast<double>(is_polar(gone.element));
    hbd = -static_cast<double>(is_polar(gone.element) && gone.hydrogens > 0) +
          static_cast<double>(is_polar(anchor.element) && anchor.hydrogens == 0);
    logp = -(logp_contribution(gone.element) + kLogPPerHydrogen * gone.hydrogens) +
           kLogPPerHydrogen * link.order;
    // The anchor's other bonds lose rotatability if the anchor becomes terminal.
    const int deg = mol.heavy_degree(nb.atom);
    for (const Neighbor& other : mol.neighbors(nb.atom)) {
      if (other.atom == site) continue;
      const Bond& b = mol.bonds()[static_cast<std::size_t>(other.bond)];
      rot += rotatable_with(mol, b, nb.atom, deg - 1) - rotatable_with(mol, b, nb.atom, deg);
    }
    return d;
  }

  const Fragment frag = fragment_for(action);
  const Atom& anchor = mol.atom(site);
  for (const FragmentAtom& fa : frag.atoms) {
    mw += atomic_mass(fa.element) + fa.hydrogens * kHydrogenMass;
    hba += is_polar(fa.element);
    hbd += is_polar(fa.element) && fa.hydrogens > 0;
    logp += logp_contribution(fa.element) + kLogPPerHydrogen * fa.hydrogens;
  }
  mw -= frag.attach_order * kHydrogenMass;
  logp -= frag.attach_order * kLogPPerHydrogen;
  if (is_polar(anchor.element) && anchor.hydrogens == frag.attach_order) hbd -= 1;

  const int deg = mol.heavy_degree(site);
  for (const Neighbor& other : mol.neighbors(site)) {
    const Bond& b = mol.bonds()[static_cast<std::size_t>(other.bond)];
    rot += rotatable_with(mol, b, site, deg + 1) - rotatable_with(mol, b, site, deg);
  }
  // The new site-fragment bond: the fragment head has degree 2 only for chains.
  const int head_degree = frag.atoms.size() > 1 ? 2 : 1;
  rot += frag.attach_order == 1 && deg + 1 >= 2 && head_degree >= 2;
  return d;
}

}  // namespace slim::chem

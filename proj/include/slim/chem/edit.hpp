#pragma once

#include <array>
#include <string>
#include <vector>

#include "slim/chem/molecule.hpp"
#include "slim/chem/properties.hpp"

namespace slim::chem {

enum class EditKind {
  AppendAtom,          // C, N, O or S on a single bond
  AppendCarbonyl,      // =O on a carbon with at least two hydrogens
  AppendHydroxyl,      // -OH on a carbon
  AppendAmine,         // -NH2 on a carbon
  AppendHalogen,       // F, Cl or Br on a carbon
  ExtendChain,         // -CH2CH3 on a carbon
  DeleteTerminalAtom,  // remove an atom of heavy degree one
  NoOp,
};

/// One rule-based edit. Attachment rule: the highest-index eligible atom
/// receives the fragment; deletion removes the highest-index terminal atom.
struct EditAction {
  EditKind kind = EditKind::NoOp;
  Element element = Element::C;  // AppendAtom / AppendHalogen only

  std::string label() const;
  bool operator==(const EditAction&) const = default;
};

/// Fixed action catalog, in a stable order.
const std::vector<EditAction>& standard_catalog();

using PropertyDeltas = std::array<double, kAllProperties.size()>;

inline double delta_of(const PropertyDeltas& d, Property p) { return d[static_cast<std::size_t>(p)]; }

/// Atom the action would modify, or -1 when infeasible (NoOp returns 0).
int attachment_site(const Molecule& mol, const EditAction& action);
bool is_feasible(const Molecule& mol, const EditAction& action);

/// Throws ChemError(NoAttachmentSite | NoRemovableAtom) when infeasible.
Molecule apply_edit(const Molecule& mol, const EditAction& action);

/// Property change the action will cause, derived from the local rule
/// (fragment composition, site hydrogens and degrees) rather than by
/// recomputing properties on the edited molecule.
PropertyDeltas declared_delta(const Molecule& mol, const EditAction& action);

}  // namespace slim::chem

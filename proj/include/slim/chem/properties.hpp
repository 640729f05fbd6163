#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "slim/chem/molecule.hpp"

namespace slim::chem {

enum class Property { MW, HBA, HBD, RotBond, LogPHat };

inline constexpr std::array<Property, 5> kAllProperties = {Property::MW, Property::HBA, Property::HBD,
                                                           Property::RotBond, Property::LogPHat};

std::string_view name(Property p);
std::optional<Property> property_from_name(std::string_view s);

/// Molecular weight including implicit hydrogens.
double molecular_weight(const Molecule& m);
/// Lipinski-style acceptor count: every N and O.
int hbond_acceptors(const Molecule& m);
/// N or O atoms carrying at least one hydrogen.
int hbond_donors(const Molecule& m);
/// Single, non-ring bonds whose endpoints both have heavy degree >= 2.
int rotatable_bonds(const Molecule& m);
/// Additive surrogate for a partition coefficient; not Crippen.
/// Per atom: C +0.5, N -0.7, O -0.7, S +0.3, F +0.2, Cl +0.7, Br +0.9,
/// plus +0.1 for each implicit hydrogen.
double logp_hat(const Molecule& m);
double logp_contribution(Element e);
inline constexpr double kLogPPerHydrogen = 0.1;

double property(const Molecule& m, Property p);

}  // namespace slim::chem

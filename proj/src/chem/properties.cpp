#include "slim/chem/properties.hpp"

namespace slim::chem {

std::string_view name(Property p) {
  switch (p) {
    case Property::MW: return "MW";
    case Property::HBA: return "HBA";
    case Property::HBD: return "HBD";
    case Property::RotBond: return "RotBond";
    case Property::LogPHat: return "LogPHat";
  }
  return "?";
}

std::optional<Property> property_from_name(std::string_view s) {
  for (Property p : kAllProperties) {
    if (name(p) == s) return p;
  }
  return std::nullopt;
}

double molecular_weight(const Molecule& m) {
  double w = 0.0;
  for (const Atom& a : m.atoms()) w += atomic_mass(a.element) + a.hydrogens * kHydrogenMass;
  return w;
}

int hbond_acceptors(const Molecule& m) {
  int n = 0;
  for (const Atom& a : m.atoms()) n += a.element == Element::N || a.element == Element::O;
  return n;
}

int hbond_donors(const Molecule& m) {
  int n = 0;
  for (const Atom& a : m.atoms()) {
    n += (a.element == Element::N || a.element == Element::O) && a.hydrogens > 0;
  }
  return n;
}

int rotatable_bonds(const Molecule& m) {
  int n = 0;
  for (const Bond& b : m.bonds()) {
    n += b.order == 1 && !b.ring && m.heavy_degree(b.a) >= 2 && m.heavy_degree(b.b) >= 2;
  }
  return n;
}

double logp_contribution(Element e) {
  switch (e) {
    case Element::C: return 0.5;
    case Element::N: return -0.7;
    case Element::O: return -0.7;
    case Element::S: return 0.3;
    case Element::F: return 0.2;
    case Element::Cl: return 0.7;
    case Element::Br: return 0.9;
  }
  return 0.0;
}

double logp_hat(const Molecule& m) {
  double v = 0.0;
  for (const Atom& a : m.atoms()) v += logp_contribution(a.element) + kLogPPerHydrogen * a.hydrogens;
  return v;
}

double property(const Molecule& m, Property p) {
  switch (p) {
    case Property::MW: return molecular_weight(m);
    case Property::HBA: return hbond_acceptors(m);
    case Property::HBD: return hbond_donors(m);
    case Property::RotBond: return rotatable_bonds(m);
    case Property::LogPHat: return logp_hat(m);
  }
  return 0.0;
}

}  // namespace slim::chem

#pragma once

#include <string>
#include <string_view>

#include "slim/chem/molecule.hpp"

namespace slim::chem {

/// Parses the toy-SMILES subset:
///
///   chain   := atom ( bond? ( atom | ring ) | '(' bond? chain ')' )*
///   atom    := 'C' | 'N' | 'O' | 'S' | 'F' | 'Cl' | 'Br'
///   bond    := '-' | '=' | '#'
///   ring    := '1'..'9'
///
/// No aromatic atoms, charges, stereo or bracket atoms. Throws ChemError.
Molecule parse_smiles(std::string_view text);

/// Deterministic depth-first serialization starting at atom 0, visiting
/// neighbours by ascending atom index. Re-parsing yields an isomorphic
/// graph; different spellings of one molecule need not serialize alike.
std::string to_smiles(const Molecule& mol);

}  // namespace slim::chem

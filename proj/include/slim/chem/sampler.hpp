#pragma once

#include "slim/chem/molecule.hpp"
#include "slim/numcore/rng.hpp"

namespace slim::chem {

struct SizeRange {
  int min_atoms = 1;
  int max_atoms = 12;
};

/// Random molecule grown atom by atom: a target size is drawn uniformly,
/// each new atom attaches to a random atom with free valence, and ring
/// closures between atoms 2-5 bonds apart are added occasionally. The
/// result is always valid and its heavy-atom count lies in `range`.
Molecule sample_molecule(Rng& rng, SizeRange range);

}  // namespace slim::chem

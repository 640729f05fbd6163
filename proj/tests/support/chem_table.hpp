#pragma once

namespace slim::testing {

struct PropertyRow {
  const char* smiles;
  double mw;
  int hba, hbd, rot;
  double logp;
};

// Values from an explicit atom/bond list evaluation of the property rules.
inline const PropertyRow kPropertyTable[] = {
    {"C", 16.043, 0, 0, 0, 0.9},           {"CCO", 46.069, 1, 1, 0, 0.9},
    {"CCCC", 58.124, 0, 0, 1, 3.0},        {"C1CCCCC1", 84.162, 0, 0, 0, 4.2},
    {"CC(=O)O", 60.052, 2, 1, 0, 0.0},     {"CN", 31.058, 1, 1, 0, 0.3},
    {"ClCCBr", 143.408, 0, 0, 1, 3.0},     {"C#N", 27.026, 1, 0, 0, -0.1},
    {"OCC(N)CS", 107.171, 2, 2, 2, 1.3},   {"C1CC1CO", 72.107, 1, 1, 1, 2.1},
};

}  // namespace slim::testing

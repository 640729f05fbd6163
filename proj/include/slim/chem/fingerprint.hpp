#pragma once

#include <cstdint>
#include <vector>

#include "slim/chem/molecule.hpp"

namespace slim::chem {

/// Fixed-width bit set.
class Fingerprint {
 public:
  explicit Fingerprint(int nbits = 2048);

  int size() const { return nbits_; }
  void set(int bit);
  bool test(int bit) const;
  int popcount() const;
  int intersection_count(const Fingerprint& other) const;
  int union_count(const Fingerprint& other) const;
  bool operator==(const Fingerprint& other) const = default;

 private:
  int nbits_;
  std::vector<std::uint64_t> words_;
};

/// Circular (ECFP-style) fingerprint. The radius-0 identifier of an atom
/// hashes (element, heavy degree, hydrogen count, ring membership); each
/// further iteration hashes the previous identifier with the sorted
/// (bond order, neighbour identifier) pairs. Every identifier from radius 0
/// through `radius` sets bit (id mod nbits). Hashing uses mix64 so bit
/// patterns are stable across builds and platforms.
Fingerprint morgan_fingerprint(const Molecule& mol, int radius = 2, int nbits = 2048);

/// |a & b| / |a | b|; defined as 0 when both are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

}  // namespace slim::chem

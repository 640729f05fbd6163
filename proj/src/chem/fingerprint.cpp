#include "slim/chem/fingerprint.hpp"

#include <algorithm>
#include <bit>
#include <utility>

#include "slim/numcore/rng.hpp"

namespace slim::chem {

Fingerprint::Fingerprint(int nbits) : nbits_(nbits) {
  if (nbits <= 0) throw Error("fingerprint width must be positive");
  words_.assign(static_cast<std::size_t>((nbits + 63) / 64), 0);
}

void Fingerprint::set(int bit) {
  if (bit < 0 || bit >= nbits_) throw Error("fingerprint bit out of range");
  words_[static_cast<std::size_t>(bit / 64)] |= std::uint64_t{1} << (bit % 64);
}

bool Fingerprint::test(int bit) const {
  if (bit < 0 || bit >= nbits_) throw Error("fingerprint bit out of range");
  return (words_[static_cast<std::size_t>(bit / 64)] >> (bit % 64)) & 1U;
}

int Fingerprint::popcount() const {
  int n = 0;
  for (auto w : words_) n += std::popcount(w);
  return n;
}

int Fingerprint::intersection_count(const Fingerprint& other) const {
  if (other.nbits_ != nbits_) throw Error("fingerprint width mismatch");
  int n = 0;
  for (std::size_t i = 0; i < words_.size(); ++i) n += std::popcount(words_[i] & other.words_[i]);
  return n;
}

int Fingerprint::union_count(const Fingerprint& other) const {
  if (other.nbits_ != nbits_) throw Error("fingerprint width mismatch");
  int n = 0;
  for (std::size_t i = 0; i < words_.size(); ++i) n += std::popcount(words_[i] | other.words_[i]);
  return n;
}

Fingerprint morgan_fingerprint(const Molecule& mol, int radius, int nbits) {
  if (radius < 0) throw Error("morgan radius must be nonnegative");
  Fingerprint fp(nbits);
  const std::size_t n = mol.size();
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int ii = static_cast<int>(i);
    std::uint64_t h = mix64(0x6D6F7267616E0000ULL);  // "morgan"
    h = hash_combine(h, static_cast<std::uint64_t>(mol.atom(ii).element));
    h = hash_combine(h, static_cast<std::uint64_t>(mol.heavy_degree(ii)));
    h = hash_combine(h, static_cast<std::uint64_t>(mol.atom(ii).hydrogens));
    h = hash_combine(h, static_cast<std::uint64_t>(mol.in_ring(ii)));
    ids[i] = h;
  }
  auto emit = [&] {
    for (auto id : ids) fp.set(static_cast<int>(id % static_cast<std::uint64_t>(nbits)));
  };
  emit();
  for (int r = 1; r <= radius; ++r) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<int, std::uint64_t>> env;
      for (const Neighbor& nb : mol.neighbors(static_cast<int>(i))) {
        env.emplace_back(mol.bonds()[static_cast<std::size_t>(nb.bond)].order,
                         ids[static_cast<std::size_t>(nb.atom)]);
      }
      std::sort(env.begin(), env.end());
      std::uint64_t h = hash_combine(static_cast<std::uint64_t>(r), ids[i]);
      for (const auto& [order, id] : env) {
        h = hash_combine(h, static_cast<std::uint64_t>(order));
        h = hash_combine(h, id);
      }
      next[i] = h;
    }
    ids = std::move(next);
    emit();
  }
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  const int u = a.union_count(b);
  if (u == 0) return 0.0;
  return static_cast<double>(a.intersection_count(b)) / u;
}

}  // namespace slim::chem

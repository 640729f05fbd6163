#include "slim/chem/sampler.hpp"

#include <algorithm>
#include <deque>

namespace slim::chem {

namespace {

constexpr double kElementWeights[] = {0.62, 0.12, 0.12, 0.04, 0.04, 0.03, 0.03};

int graph_distance(const std::vector<std::vector<int>>& adj, int from, int to) {
  std::vector<int> dist(adj.size(), -1);
  std::deque<int> q{from};
  dist[static_cast<std::size_t>(from)] = 0;
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    if (u == to) return dist[static_cast<std::size_t>(u)];
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        q.push_back(v);
      }
    }
  }
  return -1;
}

}  // namespace

Molecule sample_molecule(Rng& rng, SizeRange range) {
  if (range.min_atoms < 1 || range.max_atoms < range.min_atoms) throw Error("sample_molecule: bad size range");
  const int target = rng.uniform_int(range.min_atoms, range.max_atoms);

  for (;;) {
    std::vector<Element> elements;
    std::vector<Molecule::BondSpec> bonds;
    std::vector<int> free;  // remaining valence
    std::vector<std::vector<int>> adj;

    auto add_atom = [&](Element e) {
      elements.push_back(e);
      free.push_back(valence(e));
      adj.emplace_back();
      return static_cast<int>(elements.size()) - 1;
    };
    auto draw_element = [&] {
      return kAllElements[rng.categorical(kElementWeights)];
    };
    // Seed atoms are never halogens so that growth can continue.
    Element first = draw_element();
    while (valence(first) == 1 && target > 1) first = draw_element();
    add_atom(first);

    bool stuck = false;
    while (static_cast<int>(elements.size()) < target) {
      std::vector<int> sites;
      for (int i = 0; i < static_cast<int>(free.size()); ++i) {
        if (free[static_cast<std::size_t>(i)] > 0) sites.push_back(i);
      }
      if (sites.empty()) {
        stuck = true;
        break;
      }
      const int site = sites[rng.below(sites.size())];
      const Element e = draw_element();
      const int cap = std::min(free[static_cast<std::size_t>(site)], valence(e));
      int order = 1;
      if (cap >= 3 && rng.bernoulli(0.03)) {
        order = 3;
      } else if (cap >= 2 && rng.bernoulli(0.10)) {
        order = 2;
      }
      // A terminal halogen on the last open site would stop growth early.
      if (valence(e) == order && sites.size() == 1 && free[static_cast<std::size_t>(site)] == order &&
          static_cast<int>(elements.size()) + 1 < target) {
        continue;
      }
      const int idx = add_atom(e);
      bonds.push_back({site, idx, order});
      free[static_cast<std::size_t>(site)] -= order;
      free[static_cast<std::size_t>(idx)] -= order;
      adj[static_cast<std::size_t>(site)].push_back(idx);
      adj[static_cast<std::size_t>(idx)].push_back(site);

      if (elements.size() >= 3 && rng.bernoulli(0.12)) {
        const int a = static_cast<int>(rng.below(elements.size()));
        const int b = static_cast<int>(rng.below(elements.size()));
        if (a != b && free[static_cast<std::size_t>(a)] > 0 && free[static_cast<std::size_t>(b)] > 0) {
          const int dist = graph_distance(adj, a, b);
          if (dist >= 2 && dist <= 5) {
            bonds.push_back({a, b, 1});
            --free[static_cast<std::size_t>(a)];
            --free[static_cast<std::size_t>(b)];
            adj[static_cast<std::size_t>(a)].push_back(b);
            adj[static_cast<std::size_t>(b)].push_back(a);
          }
        }
      }
    }
    if (stuck) continue;
    return Molecule::from_graph(std::move(elements), std::move(bonds));
  }
}

}  // namespace slim::chem

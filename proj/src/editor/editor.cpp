#include "slim/editor/editor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace slim::editor {

std::string_view name(Dir d) { return d == Dir::Up ? "up" : "down"; }

std::optional<Dir> dir_from_name(std::string_view s) {
  if (s == "up") return Dir::Up;
  if (s == "down") return Dir::Down;
  return std::nullopt;
}

int sample_nucleus(std::span<const double> logits, double temperature, double top_p, Rng& rng) {
  if (!(temperature > 0)) throw ConfigError("sampling: temperature must be positive");
  if (!(top_p > 0 && top_p <= 1)) throw ConfigError("sampling: top_p must lie in (0, 1]");
  const double u = rng.uniform();
  double best = -std::numeric_limits<double>::infinity();
  for (double l : logits) best = std::max(best, l);
  if (!std::isfinite(best)) throw NumericError("sampling: no finite logit");

  std::vector<double> p(logits.size());
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::isfinite(logits[i]) ? std::exp((logits[i] - best) / temperature) : 0.0;
    total += p[i];
  }
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });

  std::size_t keep = 0;
  double mass = 0;
  while (keep < order.size() && p[order[keep]] > 0) {
    mass += p[order[keep]];
    ++keep;
    if (mass >= top_p * total) break;
  }
  double acc = 0;
  for (std::size_t i = 0; i < keep; ++i) {
    acc += p[order[i]];
    if (u * mass < acc) return order[i];
  }
  return order[keep - 1];
}

}  // namespace slim::editor

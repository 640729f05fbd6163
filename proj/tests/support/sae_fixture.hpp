#pragma once

#include <vector>

#include "slim/numcore/rng.hpp"
#include "slim/sae/sae.hpp"
#include "support/finite_diff.hpp"

namespace slim::testing {

using sae::GatedSae;
using sae::LossWeights;
using sae::SaeConfig;
using chem::Property;

inline SaeConfig small_config(int d, int expansion, std::vector<Property> props) {
  SaeConfig c;
  c.d = d;
  c.expansion = expansion;
  c.k = 3;
  c.head_hidden = 5;
  c.proj_hidden = 6;
  c.proj_out = 4;
  c.properties = std::move(props);
  c.seed = 3;
  return c;
}

inline Matrix normal_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Perturbs every tensor so that gates, biases and relu sign patterns are
// generic rather than the structured initial values.
inline void jitter(GatedSae& sae, Rng& rng, double s = 0.3) {
  for (auto& t : sae.tensors()) t += s * normal_matrix(rng, t.rows(), t.cols());
}

struct Fixture {
  GatedSae sae;
  Matrix H, Y, G;
};

inline Fixture make_fixture(int d, int expansion, int n, std::vector<Property> props, std::uint64_t seed) {
  Rng rng(seed, "sae-fixture");
  auto cfg = small_config(d, expansion, props);
  Fixture f{GatedSae(cfg, normal_matrix(rng, 1, d) * 0.1), normal_matrix(rng, n, d),
            normal_matrix(rng, n, static_cast<Eigen::Index>(props.size())),
            normal_matrix(rng, static_cast<Eigen::Index>(props.size()), d)};
  jitter(f.sae, rng);
  for (Eigen::Index r = 0; r < f.G.rows(); ++r) f.G.row(r).normalize();
  return f;
}

// Finite differences of a single weighted term across all tensors.
inline double term_gradient_error(Fixture f, LossWeights w) {
  SaeConfig c = f.sae.config();
  c.lambda = w;
  GatedSae sae(c, f.sae.b_d());
  sae.tensors() = f.sae.tensors();
  const auto analytic = sae_losses(sae, f.H, f.Y, &f.G, true).grads;
  const auto fd = central_diff(
      [&](const std::vector<Matrix>& x) {
        GatedSae probe(c, x[3]);
        probe.tensors() = x;
        return sae_losses(probe, f.H, f.Y, &f.G, false).loss.total;
      },
      sae.tensors(), 1e-6);
  return relative_error(analytic, fd);
}

}  // namespace slim::testing

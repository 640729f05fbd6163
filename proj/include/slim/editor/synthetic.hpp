#pragma once

#include <array>
#include <cstdint>

#include "slim/editor/editor.hpp"

namespace slim::editor {

struct SyntheticConfig {
  int layers = 6;
  int width = 32;
  int planted_layer = 3;
  double noise = 0.01;
  double kappa = 1.5;          // task readout gain on the planted coordinates
  double kappa_prior = 0.3;    // state-independent task preference
  double crosstalk = 0.02;     // weight of other properties in a task's readout
  double logit_scale = 1.0;
  std::uint64_t seed = 7;
};

/// Linear stand-in for a molecular editor with planted ground truth.
///
/// phi(mol) = (standardized properties, 1). Layer `planted_layer` holds
/// h = G phi_props + b + noise with G orthonormal (d x 5); every other layer
/// holds only its bias plus noise. Actions are scored from the planted layer:
///
///   logits = s (base + dir kappa_prior u_p + dir kappa sum_q w_pq u_q g_q^T h)
///
/// where u_q[a] is the catalog action's mean declared delta for property q,
/// scaled so that max |u_q| = 1, and w_pp = 1, w_pq = crosstalk. A candidate
/// is one sampled feasible action applied to the source. log p of a pair is
/// the sum of its actions' log-softmax over the full catalog.
class SyntheticLinearEditor final : public Editor {
 public:
  explicit SyntheticLinearEditor(SyntheticConfig cfg = {});

  int num_layers() const override { return cfg_.layers; }
  int width() const override { return cfg_.width; }
  const SyntheticConfig& config() const { return cfg_; }

  std::vector<Matrix> forward_capture(const chem::Molecule& source, const Task& task) const override;
  std::vector<Candidate> generate(const chem::Molecule& source, const Task& task, int n, const Sampling& sampling,
                                  const Rng& rng, const Injection* injection = nullptr) const override;
  double log_prob(const EditPair& pair) const override;
  Matrix grad_logprob_at_layer(const EditPair& pair, int layer) const override;

  /// Feature map (standardized properties, 1).
  Vector phi(const chem::Molecule& mol) const;
  /// d x 6 map of layer l (noise excluded).
  Matrix layer_map(int layer) const;
  /// Planted unit direction whose coordinate is property p.
  Vector ascent_direction(chem::Property p) const;

  /// Action logits (full catalog, no feasibility mask) for hidden state h
  /// of the planted layer.
  Vector logits(const Vector& h, const Task& task) const;
  /// Readout matrix for a task, catalog x d.
  Matrix readout(const Task& task) const;
  /// Scaled relative effect of each catalog action on each property, 5 x catalog.
  const Matrix& action_effects() const { return effects_; }

 private:
  std::vector<int> action_indices(const EditPair& pair) const;

  SyntheticConfig cfg_;
  Matrix planted_;               // d x 5
  std::vector<Vector> biases_;   // per layer
  Matrix effects_;               // 5 x A
  Vector base_;                  // A
  std::array<double, 5> mean_{}, sd_{};
};

}  // namespace slim::editor

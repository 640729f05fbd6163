#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slim/chem/properties.hpp"
#include "slim/numcore/types.hpp"
#include "slim/probe/probe.hpp"

namespace slim::sae {

struct LossWeights {
  double contrast = 0.1;
  double sup = 0.1;
  double sparse = 1e-3;
  double grad = 0.5;
};

struct SaeConfig {
  int d = 32;
  int expansion = 8;
  int k = 32;                 // top-k of the steering projection, also used inside L_grad
  LossWeights lambda;
  double tau_c = 0.07;
  int head_hidden = 64;
  int proj_hidden = 64;
  int proj_out = 32;
  double lr = 1e-3;
  int batch = 256;
  int epochs = 50;
  std::uint64_t seed = 0;
  std::vector<chem::Property> properties{chem::kAllProperties.begin(), chem::kAllProperties.end()};

  int D() const { return expansion * d; }
};

inline constexpr int kSaeFormatVersion = 1;
inline constexpr double kGateLogitClamp = 50.0;

/// Gated SAE with per-property Importance Gates, predictor heads and
/// contrastive projection heads. Row-vector convention: codes and hidden
/// states are rows.
///
///   z = sigmoid((h - b_d) W_g^T) * relu((h - b_d) W_m^T)
///   h_hat = z W_d^T + b_d
///   z_p = sigmoid(gate_p) * z
class GatedSae {
 public:
  /// Random initialization; b_d starts at `mean` (1 x d).
  GatedSae(SaeConfig cfg, const Matrix& mean);

  const SaeConfig& config() const { return cfg_; }
  int d() const { return cfg_.d; }
  int D() const { return cfg_.D(); }

  const Matrix& W_g() const { return t_[0]; }
  const Matrix& W_m() const { return t_[1]; }
  const Matrix& W_d() const { return t_[2]; }  // d x D
  const Matrix& b_d() const { return t_[3]; }  // 1 x d

  /// Tensor slots, in the fixed order used by the optimizer and checkpoints.
  enum PropertySlot { Gate, HeadW1, HeadB1, HeadW2, HeadB2, ProjW1, ProjB1, ProjW2, ProjB2, kSlots };
  static constexpr int kShared = 4;
  int slot(std::size_t property_index, PropertySlot s) const {
    return kShared + static_cast<int>(property_index) * kSlots + s;
  }
  std::size_t property_index(chem::Property p) const;

  std::vector<Matrix>& tensors() { return t_; }
  const std::vector<Matrix>& tensors() const { return t_; }
  std::vector<std::string> tensor_names() const;

  /// Rows of H (n x d) to codes (n x D).
  Matrix encode(const Matrix& H) const;
  Matrix decode(const Matrix& Z) const;
  /// sigmoid of the clamped gate logits, 1 x D.
  Matrix gate(chem::Property p) const;
  Matrix gated_code(const Matrix& Z, chem::Property p) const;

  /// Unit-normalizes every decoder column and clamps gate logits.
  void project_constraints();

  /// Per-property label normalization learned at training time.
  std::vector<double> label_mean, label_sd;

 private:
  SaeConfig cfg_;
  std::vector<Matrix> t_;
};

/// Top and bottom quartile indices of a label column (quartile size
/// floor(n/4)). Ranking is a stable descending sort, so among equal labels
/// lower indices rank higher.
std::pair<std::vector<int>, std::vector<int>> contrastive_groups(std::span<const double> labels);

struct LossBreakdown {
  double recon = 0, sparse = 0, sup = 0, contrast = 0, grad = 0, total = 0;
  std::vector<chem::Property> contrast_skipped;
};

struct LossEvaluation {
  LossBreakdown loss;
  std::vector<Matrix> grads;  // aligned with GatedSae::tensors(); empty unless requested
};

/// The five-term objective on one batch.
///   H: n x d hidden states; Y: n x |properties| normalized labels;
///   grad_dirs: |properties| x d unit rows, or nullptr to drop L_grad.
LossEvaluation sae_losses(const GatedSae& sae, const Matrix& H, const Matrix& Y, const Matrix* grad_dirs,
                          bool want_grads);

/// cos(W_d top_k(enc(d)), d), the quantity L_grad drives towards one.
double alignment_cosine(const GatedSae& sae, const Vector& direction, int k);

struct TrainResult {
  std::vector<LossBreakdown> history;  // per-epoch means over batches
};

using SaeProgress = std::function<void(int epoch, const LossBreakdown& epoch_mean)>;

/// Adam on the joint loss; after every step decoder columns are renormalized.
/// `grad_dirs` rows follow cfg.properties; pass nullptr when unavailable.
/// Throws NumericError on a non-finite loss.
std::pair<GatedSae, TrainResult> train_sae(const probe::ActivationMatrix& acts, const Matrix* grad_dirs,
                                           const SaeConfig& cfg, const SaeProgress& progress = {});

/// Normalized label matrix (columns follow sae.config().properties).
Matrix normalized_labels(const GatedSae& sae, const probe::ActivationMatrix& acts);

void save_checkpoint(const std::filesystem::path& manifest, const GatedSae& sae);
GatedSae load_checkpoint(const std::filesystem::path& manifest);

}  // namespace slim::sae

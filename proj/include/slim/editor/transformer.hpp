#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "slim/editor/editor.hpp"

namespace slim::editor {

struct TransformerConfig {
  int layers = 4;
  int width = 64;
  int heads = 4;
  int ff = 256;
  int context = 96;
  std::uint64_t seed = 11;
};

/// Pre-LN decoder-only transformer over Tokenizer ids. Hidden state of
/// layer l is the residual stream after block l; an Injection at layer l is
/// added there for every position, including generated ones.
class TinyTransformerEditor final : public Editor {
 public:
  explicit TinyTransformerEditor(TransformerConfig cfg = {});

  int num_layers() const override { return cfg_.layers; }
  int width() const override { return cfg_.width; }
  const TransformerConfig& config() const { return cfg_; }

  std::vector<Matrix> forward_capture(const chem::Molecule& source, const Task& task) const override;
  std::vector<Candidate> generate(const chem::Molecule& source, const Task& task, int n, const Sampling& sampling,
                                  const Rng& rng, const Injection* injection = nullptr) const override;
  double log_prob(const EditPair& pair) const override;
  /// Teacher-forced over the full sequence; one row per input position.
  Matrix grad_logprob_at_layer(const EditPair& pair, int layer) const override;

  /// log p of the target tokens when the hidden state of `layer` is
  /// replaced by `hidden` (T x d). Used to check gradients numerically.
  double log_prob_with_hidden(const EditPair& pair, int layer, const Matrix& hidden) const;

  /// Next-token logits for every position, computed by the full forward.
  Matrix sequence_logits(const std::vector<int>& tokens, const Injection* injection = nullptr) const;
  /// Residual stream after every block for a full token sequence.
  std::vector<Matrix> sequence_hidden(const std::vector<int>& tokens) const;
  /// Same quantity from the incremental (cached) decoder used by generate().
  Matrix incremental_logits(const std::vector<int>& tokens, const Injection* injection = nullptr) const;

  std::vector<std::string> parameter_names() const;
  std::vector<Matrix>& parameters() { return params_; }
  const std::vector<Matrix>& parameters() const { return params_; }

  void save(const std::filesystem::path& manifest) const;
  static TinyTransformerEditor load(const std::filesystem::path& manifest);

 private:
  friend class Decoder;
  friend struct TransformerGraph;
  const Matrix& p(int index) const { return params_[static_cast<std::size_t>(index)]; }

  TransformerConfig cfg_;
  std::vector<Matrix> params_;
};

struct TrainConfig {
  int epochs = 11;
  int batch = 64;
  double lr = 1e-3;
  double clip_norm = 1.0;
  double holdout = 0.05;
  std::uint64_t seed = 13;
};

struct TrainReport {
  double initial_loss = 0;              // mean target-token loss on the training set before step 1
  std::vector<double> epoch_loss;       // mean over the epoch's batches
  double heldout_loss = 0;
  double heldout_token_accuracy = 0;
  std::size_t train_pairs = 0;
  std::size_t heldout_pairs = 0;
  std::size_t dropped_pairs = 0;        // longer than the context window
};

using TrainProgress = std::function<void(int epoch, int step, int steps_per_epoch, double loss)>;

/// Teacher-forced cross-entropy on target tokens, Adam, global gradient
/// clipping. Throws NumericError if the loss becomes non-finite.
TrainReport train_tiny_editor(TinyTransformerEditor& model, const std::vector<EditPair>& pairs,
                              const TrainConfig& cfg, const TrainProgress& progress = {});

}  // namespace slim::editor

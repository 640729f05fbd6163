#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slim/chem/edit.hpp"
#include "slim/chem/molecule.hpp"
#include "slim/chem/properties.hpp"
#include "slim/numcore/rng.hpp"
#include "slim/numcore/types.hpp"

namespace slim::editor {

enum class Dir { Up, Down };

std::string_view name(Dir d);
std::optional<Dir> dir_from_name(std::string_view s);
inline double sign(Dir d) { return d == Dir::Up ? 1.0 : -1.0; }

/// What the editor is asked to do with a molecule.
struct Task {
  chem::Property property = chem::Property::MW;
  Dir dir = Dir::Up;
};

/// Residual-stream intervention: `vector` is added to every position of the
/// hidden state produced by `layer`, before any later layer reads it.
struct Injection {
  int layer = 0;
  Vector vector;
};

struct Sampling {
  double temperature = 0.8;
  double top_p = 0.95;
  int max_tokens = 96;
};

/// One generated candidate. `molecule` is empty when the text does not parse.
struct Candidate {
  std::string text;
  std::optional<chem::Molecule> molecule;

  bool valid() const { return molecule.has_value(); }
};

/// Supervised edit example. `actions` lists the rule edits that produced the
/// target; it may be empty for pairs read from a corpus without them.
struct EditPair {
  chem::Molecule source;
  chem::Molecule target;
  Task task;
  std::vector<chem::EditAction> actions;
};

/// The frozen model SLIM inspects and steers.
class Editor {
 public:
  virtual ~Editor() = default;

  virtual int num_layers() const = 0;
  virtual int width() const = 0;

  /// Hidden states per layer, each T x d for the prompt (source, task).
  virtual std::vector<Matrix> forward_capture(const chem::Molecule& source, const Task& task) const = 0;

  /// Samples `n` candidates. Each candidate draws from its own child stream
  /// of `rng`, so runs that differ only in the injection share randomness.
  virtual std::vector<Candidate> generate(const chem::Molecule& source, const Task& task, int n,
                                          const Sampling& sampling, const Rng& rng,
                                          const Injection* injection = nullptr) const = 0;

  /// log p(target | source, task).
  virtual double log_prob(const EditPair& pair) const = 0;

  /// Gradient of log p(target | source, task) with respect to the hidden
  /// state at `layer`, one row per token position.
  virtual Matrix grad_logprob_at_layer(const EditPair& pair, int layer) const = 0;
};

/// Nucleus sampling over `logits`: temperature scaling, then the smallest
/// set of highest-probability entries (ties by index) whose mass reaches
/// top_p. Entries equal to -infinity are never drawn. Consumes exactly one
/// uniform variate.
int sample_nucleus(std::span<const double> logits, double temperature, double top_p, Rng& rng);

}  // namespace slim::editor

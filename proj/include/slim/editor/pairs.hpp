#pragma once

#include <filesystem>
#include <vector>

#include "slim/chem/sampler.hpp"
#include "slim/editor/editor.hpp"

namespace slim::editor {

inline constexpr int kPairMaxTries = 20;

/// Applies 1-3 feasible catalog actions whose declared delta moves the
/// task property in the task direction. A draw whose net change is not a
/// strict improvement is discarded; after kPairMaxTries failed draws the
/// call throws ChemError(NoAttachmentSite).
EditPair make_edit_pair(const chem::Molecule& source, const Task& task, Rng& rng);

struct CorpusOptions {
  std::size_t pairs = 20000;
  chem::SizeRange sizes{2, 12};
  std::vector<chem::Property> properties{chem::kAllProperties.begin(), chem::kAllProperties.end()};
  std::vector<Dir> dirs{Dir::Up, Dir::Down};
  /// Fraction of pairs labelled with a task their edit does not serve
  /// (an edit drawn for a random other task that fails the stated one).
  double off_target = 0.0;
};

/// Random sources with uniformly drawn (property, direction) tasks. Sources
/// for which no pair exists are skipped. Off-target pairs keep the actions
/// actually applied.
std::vector<EditPair> make_corpus(const CorpusOptions& opts, Rng& rng);

/// Line format: src TAB tgt TAB prop TAB dir [TAB action;action;...]
void write_corpus(const std::filesystem::path& path, const std::vector<EditPair>& pairs);
std::vector<EditPair> read_corpus(const std::filesystem::path& path);

/// Inverse of EditAction::label() over the standard catalog.
std::optional<chem::EditAction> action_from_label(std::string_view label);

}  // namespace slim::editor

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slim/editor/editor.hpp"

namespace slim::editor {

/// Character-level vocabulary over the SMILES grammar ("Cl" and "Br" are
/// single tokens) plus control tokens.
///
/// Prompt layout: [BOS] [PROP:p] [DIR:d] source [SEP] target [EOS]
class Tokenizer {
 public:
  static int vocab_size();
  static int bos();
  static int sep();
  static int eos();
  static int prop(chem::Property p);
  static int dir(Dir d);
  static std::string_view text(int token);

  /// Throws ChemError(UnknownSymbol) on characters outside the grammar.
  static std::vector<int> encode_smiles(std::string_view smiles);
  /// Concatenated token texts; control tokens appear bracketed.
  static std::string decode(std::span<const int> tokens);

  static std::vector<int> prompt(const chem::Molecule& source, const Task& task);
  /// Prompt followed by target tokens and [EOS].
  static std::vector<int> full_sequence(const EditPair& pair);
};

}  // namespace slim::editor

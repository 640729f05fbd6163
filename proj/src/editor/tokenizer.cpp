#include "slim/editor/tokenizer.hpp"

#include <array>

#include "slim/chem/smiles.hpp"

namespace slim::editor {

namespace {

constexpr std::array<std::string_view, 32> kVocab = {
    "C", "N", "O", "S", "F", "Cl", "Br", "(", ")", "=", "#", "-", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "[BOS]", "[SEP]", "[EOS]", "[PROP:MW]", "[PROP:HBA]", "[PROP:HBD]", "[PROP:RotBond]", "[PROP:LogPHat]",
    "[DIR:up]", "[DIR:down]", "[PAD]"};

constexpr int kBos = 21;
constexpr int kFirstProp = 24;
constexpr int kFirstDir = 29;

}  // namespace

int Tokenizer::vocab_size() { return static_cast<int>(kVocab.size()); }
int Tokenizer::bos() { return kBos; }
int Tokenizer::sep() { return kBos + 1; }
int Tokenizer::eos() { return kBos + 2; }
int Tokenizer::prop(chem::Property p) { return kFirstProp + static_cast<int>(p); }
int Tokenizer::dir(Dir d) { return kFirstDir + (d == Dir::Up ? 0 : 1); }

std::string_view Tokenizer::text(int token) {
  if (token < 0 || token >= vocab_size()) throw ShapeError("tokenizer: token out of range");
  return kVocab[static_cast<std::size_t>(token)];
}

std::vector<int> Tokenizer::encode_smiles(std::string_view s) {
  std::vector<int> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && ((s[i] == 'C' && s[i + 1] == 'l') || (s[i] == 'B' && s[i + 1] == 'r'))) {
      out.push_back(s[i] == 'C' ? 5 : 6);
      ++i;
      continue;
    }
    int token = -1;
    for (int t = 0; t < 21; ++t) {
      if (t == 5 || t == 6) continue;
      if (kVocab[static_cast<std::size_t>(t)][0] == s[i]) token = t;
    }
    if (token < 0) {
      throw chem::ChemError(chem::ChemErrorKind::UnknownSymbol, "tokenizer: '" + std::string(1, s[i]) + "'");
    }
    out.push_back(token);
  }
  return out;
}

std::string Tokenizer::decode(std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) out += text(t);
  return out;
}

std::vector<int> Tokenizer::prompt(const chem::Molecule& source, const Task& task) {
  std::vector<int> out{bos(), prop(task.property), dir(task.dir)};
  const auto src = encode_smiles(chem::to_smiles(source));
  out.insert(out.end(), src.begin(), src.end());
  out.push_back(sep());
  return out;
}

std::vector<int> Tokenizer::full_sequence(const EditPair& pair) {
  auto out = prompt(pair.source, pair.task);
  const auto tgt = encode_smiles(chem::to_smiles(pair.target));
  out.insert(out.end(), tgt.begin(), tgt.end());
  out.push_back(eos());
  return out;
}

}  // namespace slim::editor

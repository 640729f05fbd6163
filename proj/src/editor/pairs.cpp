#include "slim/editor/pairs.hpp"

#include <fstream>
#include <sstream>

#include "slim/chem/smiles.hpp"

namespace slim::editor {

namespace {

bool moves(const chem::PropertyDeltas& d, const Task& task) {
  const double v = chem::delta_of(d, task.property);
  return task.dir == Dir::Up ? v > 0 : v < 0;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

EditPair make_edit_pair(const chem::Molecule& source, const Task& task, Rng& rng) {
  const auto& catalog = chem::standard_catalog();
  const double before = chem::property(source, task.property);
  for (int attempt = 0; attempt < kPairMaxTries; ++attempt) {
    const int steps = rng.uniform_int(1, 3);
    chem::Molecule current = source;
    std::vector<chem::EditAction> applied;
    for (int s = 0; s < steps; ++s) {
      std::vector<std::size_t> options;
      for (std::size_t a = 0; a < catalog.size(); ++a) {
        if (chem::is_feasible(current, catalog[a]) && moves(chem::declared_delta(current, catalog[a]), task)) {
          options.push_back(a);
        }
      }
      if (options.empty()) break;
      const auto& action = catalog[options[rng.below(options.size())]];
      current = chem::apply_edit(current, action);
      applied.push_back(action);
    }
    if (applied.empty()) continue;
    const double after = chem::property(current, task.property);
    if (task.dir == Dir::Up ? after > before : after < before) {
      return {source, std::move(current), task, std::move(applied)};
    }
  }
  throw chem::ChemError(chem::ChemErrorKind::NoAttachmentSite,
                        "no edit moves " + std::string(chem::name(task.property)) + " " +
                            std::string(name(task.dir)) + " for " + chem::to_smiles(source));
}

std::vector<EditPair> make_corpus(const CorpusOptions& opts, Rng& rng) {
  if (opts.properties.empty() || opts.dirs.empty()) throw ConfigError("corpus: empty task set");
  std::vector<EditPair> out;
  out.reserve(opts.pairs);
  while (out.size() < opts.pairs) {
    const chem::Molecule src = chem::sample_molecule(rng, opts.sizes);
    const Task task{opts.properties[rng.below(opts.properties.size())], opts.dirs[rng.below(opts.dirs.size())]};
    try {
      if (opts.off_target > 0 && rng.bernoulli(opts.off_target)) {
        // An edit made for another task, kept only if it fails the stated one.
        const Task other{chem::kAllProperties[rng.below(chem::kAllProperties.size())],
                         rng.bernoulli(0.5) ? Dir::Up : Dir::Down};
        EditPair pair = make_edit_pair(src, other, rng);
        const double delta = chem::property(pair.target, task.property) - chem::property(src, task.property);
        if (task.dir == Dir::Up ? delta > 0 : delta < 0) continue;
        pair.task = task;
        out.push_back(std::move(pair));
      } else {
        out.push_back(make_edit_pair(src, task, rng));
      }
    } catch (const chem::ChemError&) {
    }
  }
  return out;
}

std::optional<chem::EditAction> action_from_label(std::string_view label) {
  for (const auto& a : chem::standard_catalog()) {
    if (a.label() == label) return a;
  }
  return std::nullopt;
}

void write_corpus(const std::filesystem::path& path, const std::vector<EditPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) {
    out << chem::to_smiles(p.source) << '\t' << chem::to_smiles(p.target) << '\t' << chem::name(p.task.property)
        << '\t' << name(p.task.dir);
    if (!p.actions.empty()) {
      out << '\t';
      for (std::size_t i = 0; i < p.actions.size(); ++i) out << (i ? ";" : "") << p.actions[i].label();
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EditPair> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<EditPair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto f = split(line, '\t');
    if (f.size() != 4 && f.size() != 5) throw IoError(where + ": expected 4 or 5 tab-separated fields");
    const auto prop = chem::property_from_name(f[2]);
    const auto dir = dir_from_name(f[3]);
    if (!prop || !dir) throw IoError(where + ": unknown property or direction");
    EditPair pair{chem::parse_smiles(f[0]), chem::parse_smiles(f[1]), {*prop, *dir}, {}};
    if (f.size() == 5) {
      for (const auto& label : split(f[4], ';')) {
        const auto action = action_from_label(label);
        if (!action) throw IoError(where + ": unknown action '" + label + "'");
        pair.actions.push_back(*action);
      }
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace slim::editor

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slim/editor/editor.hpp"

namespace slim::eval {

using PropertyValues = std::array<double, chem::kAllProperties.size()>;

PropertyValues all_properties(const chem::Molecule& m);

/// One generated candidate with oracle values recomputed on both sides.
struct EditRecord {
  std::size_t source_index = 0;
  std::string source;
  std::string candidate;
  bool valid = false;
  PropertyValues before{};
  PropertyValues after{};                // meaningful only if valid
  std::optional<double> similarity;      // Tanimoto, only if valid
  std::string method;
  double alpha = 0.0;
  std::uint64_t seed = 0;

  double value_before(chem::Property p) const { return before[static_cast<std::size_t>(p)]; }
  double value_after(chem::Property p) const { return after[static_cast<std::size_t>(p)]; }
  /// valid and the property moves strictly in the task direction.
  bool improves(const editor::Task& task) const;
};

/// Builds a record from candidate text; invalid text yields valid=false.
EditRecord make_record(std::size_t source_index, const chem::Molecule& source, const editor::Candidate& cand);

/// Percentage of sources with at least one valid candidate that strictly
/// improves the task property and has similarity >= tau.
double acc_at_tau(std::span<const EditRecord> records, double tau, const editor::Task& task);

/// Percentage of sources with at least one candidate improving every task
/// simultaneously with similarity >= tau.
double joint_success(std::span<const EditRecord> records, std::span<const editor::Task> tasks, double tau);

/// Pearson correlation of mean ranks; nullopt if either side is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Mean ranks (1-based), ties share the average rank.
std::vector<double> mean_ranks(std::span<const double> x);

}  // namespace slim::eval

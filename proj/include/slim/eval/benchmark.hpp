#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slim/eval/metrics.hpp"
#include "slim/probe/probe.hpp"
#include "slim/sae/sae.hpp"
#include "slim/steer/steer.hpp"

namespace slim::eval {

/// One arm of the benchmark: method tag, optional direction, strength.
/// Method "sft" has no direction and requires alpha == 0.
struct Arm {
  std::string method = "sft";
  std::optional<steer::Direction> direction;
  double alpha = 0.0;
};

struct BenchmarkSpec {
  editor::Task task;
  int layer = 0;
  int n = 5;
  editor::Sampling sampling;
  std::uint64_t seed = 0;
};

/// |molecules| * n records. Candidate streams depend only on the seed and
/// source index, so every arm sees the same randomness.
std::vector<EditRecord> run_benchmark(const editor::Editor& ed, std::span<const chem::Molecule> molecules,
                                      const Arm& arm, const BenchmarkSpec& spec);

struct AlphaSearch {
  double best_alpha = 0.0;
  std::vector<double> grid;
  std::vector<double> acc;  // Acc@tau per grid point
};

/// Grid search maximizing Acc@tau; ties go to the smaller alpha.
AlphaSearch tune_alpha(const editor::Editor& ed, std::span<const chem::Molecule> validation,
                       const steer::Direction& direction, std::span<const double> grid, const BenchmarkSpec& spec,
                       double tau = 0.15);

inline constexpr std::array<double, 2> kTaus{0.15, 0.65};

struct GridCell {
  std::string arm;
  chem::Property property;
  double tau = 0;
  double acc = 0;
  double alpha = 0;
};

struct AblationArm {
  std::string name;
  std::map<chem::Property, Arm> per_property;
};

struct AblationReport {
  std::vector<GridCell> cells;                                   // arm-major, then property, then tau
  std::map<std::string, std::map<chem::Property, double>> alignment;  // optional cos(W_d topk(enc g), g)
};

/// Cross product arms x properties x taus with shared candidate streams.
AblationReport ablation_matrix(const editor::Editor& ed, std::span<const chem::Molecule> molecules,
                               std::span<const AblationArm> arms, std::span<const chem::Property> properties,
                               const BenchmarkSpec& base);

/// Vanilla SAE: reconstruction and sparsity only.
sae::SaeConfig vanilla_config(sae::SaeConfig cfg);
/// Full objective without the gradient-alignment term.
sae::SaeConfig no_grad_config(sae::SaeConfig cfg);

struct FeatureRow {
  int feature = 0;
  chem::Property property;
  double gate = 0;
  double top_mean = 0;     // mean property value over the top 25% activations
  double bottom_mean = 0;  // same over the bottom 25%
  double delta = 0;
  double rho = 0;
};

struct FeatureReport {
  std::vector<FeatureRow> rows;           // per property, sorted by |rho| descending
  std::vector<FeatureRow> best;           // one per property (when any feature is non-constant)
  std::vector<std::pair<chem::Property, int>> constant;  // flagged, excluded
};

/// For each property: the top_n features by Importance Gate value, their
/// Spearman correlation with the property and quartile means.
FeatureReport feature_report(const sae::GatedSae& sae, const probe::ActivationMatrix& acts, int top_n = 50);

void write_records_json(const std::filesystem::path& path, std::span<const EditRecord> records);
std::vector<EditRecord> read_records_json(const std::filesystem::path& path);
void write_grid_csv(const std::filesystem::path& path, const AblationReport& report);
void write_grid_json(const std::filesystem::path& path, const AblationReport& report);
void write_feature_csv(const std::filesystem::path& path, const FeatureReport& report);
/// Bar chart of Acc@tau difference versus the "sft" arm per property and arm.
void write_delta_svg(const std::filesystem::path& path, const AblationReport& report, double tau = 0.15);

}  // namespace slim::eval

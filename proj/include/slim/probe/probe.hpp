#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "slim/editor/editor.hpp"

namespace slim::probe {

/// Hidden states of one layer, one row per molecule (mean over token
/// positions), with oracle labels per property.
struct ActivationMatrix {
  int layer = 0;
  Matrix hidden;                             // n x d
  std::vector<chem::Property> properties;
  Matrix labels;                             // n x |properties|

  Eigen::Index rows() const { return hidden.rows(); }
  Vector label(chem::Property p) const;
};

/// Prompt task used when capturing molecule i: properties are cycled by
/// index with direction up. Irrelevant for editors whose hidden states do
/// not depend on the task.
editor::Task capture_task(std::size_t index, std::span<const chem::Property> properties);

/// Activations of every layer in one pass over the molecules.
std::vector<ActivationMatrix> extract_all_layers(const editor::Editor& ed, std::span<const chem::Molecule> molecules,
                                                 std::span<const chem::Property> properties);

ActivationMatrix extract_activations(const editor::Editor& ed, std::span<const chem::Molecule> molecules, int layer,
                                     std::span<const chem::Property> properties);

struct ScanOptions {
  double lambda = 1.0;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct ScanResult {
  int best_layer = 0;
  std::vector<chem::Property> properties;
  Matrix r2;  // layers x properties

  Vector mean_r2() const { return r2.rowwise().mean(); }
};

/// Ridge probe per layer and property; l* maximizes the property-mean test
/// R^2, ties to the lowest layer. The test split is chosen by hashing each
/// row's content, so it does not depend on row order.
ScanResult scan_layers(std::span<const ActivationMatrix> layers, const ScanOptions& opts = {});

ScanResult layer_scan(const editor::Editor& ed, std::span<const chem::Molecule> molecules,
                      std::span<const chem::Property> properties, const ScanOptions& opts = {});

/// CSV with header "layer,<property>...,mean".
void write_r2_csv(const std::filesystem::path& path, const ScanResult& result);

void save_activations(const std::filesystem::path& manifest, const ActivationMatrix& acts);
ActivationMatrix load_activations(const std::filesystem::path& manifest);

}  // namespace slim::probe

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slim/editor/synthetic.hpp"
#include "slim/editor/transformer.hpp"
#include "slim/sae/sae.hpp"

namespace slim::pipeline {

enum class Backend { Synthetic, TinyTransformer };

struct DataConfig {
  int scan_molecules = 1000;
  int sae_molecules = 4000;
  int pairs_per_property = 500;
  int corpus_pairs = 20000;   // SFT pairs (transformer backend only)
  double corpus_off_target = 0.75;  // fraction of SFT pairs whose edit misses the stated task
  int validation = 100;
  int test = 100;
  int min_atoms = 2;
  int max_atoms = 12;
};

struct SteerConfig {
  std::vector<double> alpha_grid{0.0, 0.5, 1.0, 2.0, 5.0};
  int n = 5;
  double temperature = 0.8;
  double top_p = 0.95;
  int max_tokens = 96;
  double tau = 0.15;  // selection threshold for alpha tuning
};

/// Whole-pipeline configuration. JSON keys mirror the field names; every
/// key is optional and unknown keys are rejected.
struct PipelineConfig {
  Backend backend = Backend::Synthetic;
  std::uint64_t seed = 0;
  std::vector<chem::Property> properties{chem::kAllProperties.begin(), chem::kAllProperties.end()};
  editor::Dir direction = editor::Dir::Up;
  std::filesystem::path work_dir = "slim-run";
  editor::SyntheticConfig synthetic;
  editor::TransformerConfig transformer;
  editor::TrainConfig train;
  DataConfig data;
  sae::SaeConfig sae;  // d and properties are filled in from the editor and the list above
  SteerConfig steer;
  int interpret_top_n = 50;
};

/// Parses and validates; throws ConfigError naming the offending field
/// (or line, for syntax errors).
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical JSON form with every default filled in.
nlohmann::json to_json(const PipelineConfig& cfg);

std::string_view name(Backend b);

}  // namespace slim::pipeline

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slim/pipeline/config.hpp"

namespace slim::pipeline {

enum class Stage {
  GenPairs,
  TrainEditor,
  ScanLayers,
  ExtractActs,
  TrainSae,
  ExtractDirection,
  TuneAlpha,
  Steer,
  Evaluate,
  Ablate,
  Interpret,
  Report,
};

/// Execution order of `all`.
std::span<const Stage> all_stages();
std::string_view name(Stage s);
std::optional<Stage> stage_from_name(std::string_view s);

struct StageResult {
  Stage stage;
  bool skipped = false;  // up to date, nothing done
  std::vector<std::string> summary;
};

using Log = std::function<void(const std::string&)>;

/// Runs one stage. Cheap prerequisites (pair generation, activation
/// extraction, the synthetic editor manifest) are produced on demand;
/// expensive ones raise MissingArtifact naming the stage to run first.
/// A stage whose stamp matches the current config is skipped unless
/// `force` is set.
StageResult run_stage(const PipelineConfig& cfg, Stage stage, bool force = false, const Log& log = {});

/// Every stage in order.
std::vector<StageResult> run_all(const PipelineConfig& cfg, bool force = false, const Log& log = {});

/// The editor described by the config (trained checkpoint for the
/// transformer backend; requires train-editor).
std::unique_ptr<editor::Editor> load_editor(const PipelineConfig& cfg);

/// Files written by `report`, relative to the work directory.
std::vector<std::filesystem::path> report_files();

}  // namespace slim::pipeline

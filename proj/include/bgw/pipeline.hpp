#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bgw/io.hpp"

namespace bgw {

/// Stages in execution order.
const std::vector<std::string>& pipeline_stages();
/// Stages whose results `stage` consumes.
std::vector<std::string> stage_dependencies(const std::string& stage);

/// Experiment configuration:
///   {"model": "models/model_a.json" | {...inline model...},
///    "output_dir": "out/model_a",
///    "stages": ["spectral", "kernel", "qsd", ...],
///    "<stage>": {per-stage parameters}}
/// Relative paths resolve against the directory of the config file.
struct ExperimentConfig {
  Json raw;
  std::filesystem::path base_dir;
  std::filesystem::path model_path;  // empty for an inline model
  std::filesystem::path output_dir;
  std::vector<std::string> stages;

  static ExperimentConfig load(const std::filesystem::path& path);
  /// Checks stage names and resolves paths. Dependencies and seeds are
  /// checked when stages run.
  static ExperimentConfig from_json(Json raw, const std::filesystem::path& base_dir);

  const Json& stage_params(const std::string& stage) const;
  ModelSpec model() const;
};

struct PipelineResult {
  int exit_code = 0;
  OrderedJson summary;
  std::vector<std::string> hard_failures;
};

/// Checks dependencies and seeds of every configured stage, runs them in
/// order with one artifact each, then re-reads the artifacts to build
/// summary.json. Exit code 1 iff a hard check fails.
PipelineResult run_pipeline(const ExperimentConfig& config);

/// Runs a single stage. Its inputs are read from the artifacts already in the
/// output directory (DependencyError when missing).
PipelineResult run_stage(const ExperimentConfig& config, const std::string& stage);

/// Headline checks recomputed from the artifact files in `output_dir` written
/// by the given stages.
PipelineResult summarize(const std::filesystem::path& output_dir, const std::vector<std::string>& stages);

}  // namespace bgw

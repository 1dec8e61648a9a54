#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ame/distill.hpp"
#include "ame/synthgen.hpp"

namespace ame {

enum class Recipe { kBaseToNew, kCollapse, kAngleStudy, kGapSweep, kShotSweep };

const char* recipe_name(Recipe r);

/// One experiment: a named recipe plus everything needed to reproduce it.
struct ExperimentConfig {
  Recipe recipe = Recipe::kBaseToNew;
  std::string output_dir;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t shots = 16;
  std::size_t test_shots = 16;  // per-class held-out evaluation set size
  std::vector<std::size_t> shot_grid = {4, 8, 16, 32, 64};
  std::size_t gap_test_samples = 1000;
  double teacher_temperature = 0.07;
  ClassGeometry geometry;
  TrainConfig train;
};

/// Where a resolved config value came from: given explicitly, defaulted from
/// the training protocol, or defaulted by this artifact.
struct FieldNote {
  std::string field;
  std::string value;
  std::string source;
  bool defaulted = false;
};

struct ParseReport {
  bool ok = false;
  std::string error;  // parse/field diagnostics when !ok
  ExperimentConfig config;
  std::vector<FieldNote> fields;
};

/// Single shared schema: `run` executes exactly the configs this accepts.
ParseReport parse_config_text(const std::string& json_text);

/// Parse plus environment checks (output directory existence), no execution.
struct ValidationResult {
  int exit_code = 0;  // 0 ok, 2 parse/schema error, 4 missing output dir
  std::string message;
  ParseReport report;
  std::string resolved_output_dir;
};
ValidationResult validate_config_file(const std::string& config_path);

/// Runs a recipe end to end and writes its artifact files plus manifest.json.
/// Exit codes: 0 success, 2 parse error, 3 divergence, 4 missing output dir.
struct RunResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> written_files;  // relative to the output dir
};
RunResult run_experiment(const ExperimentConfig& config,
                         const std::string& resolved_output_dir);
RunResult run_experiment_file(const std::string& config_path);

/// Applies the AME_OUTPUT_ROOT override to relative output directories.
std::string resolve_output_dir(const std::string& configured);

}  // namespace ame

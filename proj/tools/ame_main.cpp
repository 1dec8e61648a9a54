// Experiment driver: run a recipe from a JSON config, validate a config, or
// print the library version.
//
//   ame run <config.json>
//   ame validate <config.json>
//   ame version
//
// Exit codes: 0 success, 2 config/parse error, 3 training divergence,
// 4 missing output directory.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "ame/experiment.hpp"
#include "ame/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal distillation testbed with shared-manifold entropy "
               "regularization"};
  app.require_subcommand(1);

  std::string run_config;
  CLI::App* run_cmd = app.add_subcommand("run", "Execute a recipe end to end");
  run_cmd->add_option("config", run_config, "Experiment config (JSON)")->required();

  std::string validate_config;
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "Check a config without executing it");
  validate_cmd->add_option("config", validate_config, "Experiment config (JSON)")
      ->required();

  app.add_subcommand("version", "Print the library version");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("version")) {
    std::printf("ame %s\n", ame::kVersion);
    return 0;
  }

  if (app.got_subcommand("validate")) {
    ame::ValidationResult result = ame::validate_config_file(validate_config);
    if (result.exit_code != 0) {
      std::fprintf(stderr, "invalid: %s\n", result.message.c_str());
      return result.exit_code;
    }
    std::printf("config ok: recipe=%s output_dir=%s\n",
                ame::recipe_name(result.report.config.recipe),
                result.resolved_output_dir.c_str());
    std::printf("%-32s %-22s %s\n", "field", "value", "source");
    for (const ame::FieldNote& note : result.report.fields) {
      std::printf("%-32s %-22s %s%s\n", note.field.c_str(), note.value.c_str(),
                  note.source.c_str(), note.defaulted ? " (defaulted)" : "");
    }
    return 0;
  }

  ame::RunResult result = ame::run_experiment_file(run_config);
  if (result.exit_code != 0) {
    std::fprintf(stderr, "error: %s\n", result.message.c_str());
    return result.exit_code;
  }
  for (const std::string& file : result.written_files) {
    std::printf("wrote %s\n", file.c_str());
  }
  return 0;
}

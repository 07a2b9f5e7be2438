#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace switchgeo {

struct ValidationError {
  std::string path;  // JSON pointer
  std::string message;
};

struct ConfigResult {
  nlohmann::json normalized;
  std::vector<ValidationError> errors;
  bool ok() const { return errors.empty(); }
  std::string error_text() const;
};

// Fills defaults for the named experiment and reports all problems at once.
// Strict: unknown keys are errors.
ConfigResult validate_config(const nlohmann::json& config);

// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 IO error.
int run_experiment(const std::string& config_path, const std::string& out_dir);

// Tidy per-figure CSVs (fig1a/fig1b/fig1c) plus machine-readable column
// schemas, derived from a completed results directory.
int emit_plot_data(const std::string& results_dir);

}  // namespace switchgeo

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "forgebench/error.hpp"

namespace forgebench {

struct CliConfig {
  std::string subcommand;
  std::filesystem::path root;  // dataset root (synth writes here, ingest reads here)
  std::vector<std::filesystem::path> splits;  // ingest; defaults to <root>/splits/{train,test}.txt
  std::filesystem::path out = "work";  // working directory holding every stage's artifacts
  std::filesystem::path provider_config;
  std::filesystem::path mock_transcript;
  std::uint64_t seed = 0;
  int clamp_t = 10;
  bool pql = true;
  double threshold = 0.5;
  bool dry_run = false;

  // train-cnn
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_forged = 0.0;  // 0 = pristine/forged patch ratio
  std::string model_name;      // default derived from the classifier and features

  // train-svm
  int folds = 5;

  // eval-llm
  std::string eval_split = "test";  // train | test | all

  // synth
  int synth_pristine = 6;
  int synth_forged = 6;

  /// Every field, defaults included.
  std::map<std::string, std::string> describe() const;
};

/// Throws ConfigError for values or combinations the subcommand cannot use.
void validate(const CliConfig& config);

struct WorkPaths {
  std::filesystem::path manifest;
  std::filesystem::path skip_log;
  std::filesystem::path features;
  std::filesystem::path models;
  std::filesystem::path runs;
  std::filesystem::path reports;
  std::filesystem::path cache;
};

WorkPaths work_paths(const std::filesystem::path& out);

/// Artifacts a subcommand would write, for --dry-run.
std::vector<std::string> planned_artifacts(const CliConfig& config);

// Each stage returns the files it wrote. Missing inputs raise MissingUpstreamArtifact.
std::vector<std::filesystem::path> cmd_synth(const CliConfig& config);
std::vector<std::filesystem::path> cmd_ingest(const CliConfig& config);
std::vector<std::filesystem::path> cmd_features(const CliConfig& config);
std::vector<std::filesystem::path> cmd_train_svm(const CliConfig& config);
std::vector<std::filesystem::path> cmd_train_cnn(const CliConfig& config);
std::vector<std::filesystem::path> cmd_eval_llm(const CliConfig& config);
std::vector<std::filesystem::path> cmd_report(const CliConfig& config);

/// 0 success, 2 usage, 3 data, 4 transport.
int exit_code_for(ErrorCategory category);

/// Parses `args` (without the program name), runs the subcommand and returns
/// the process exit code. Progress goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace forgebench

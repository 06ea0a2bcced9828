#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forgebench/llm.hpp"
#include "forgebench/metrics.hpp"

namespace forgebench {

/// Everything derived from a run's predictions. AUC is absent when the scored
/// predictions hold a single class.
struct RunMetrics {
  std::size_t predictions = 0;
  std::size_t scored = 0;
  std::size_t unparseable = 0;
  std::size_t refusal = 0;
  std::optional<double> auc;
  double threshold = kDefaultThreshold;
  Confusion confusion;

  friend bool operator==(const RunMetrics& a, const RunMetrics& b);
};

RunMetrics compute_run_metrics(const std::vector<Prediction>& predictions, double threshold = kDefaultThreshold);
nlohmann::json metrics_to_json(const RunMetrics& metrics);

/// Predictions that carry a score, as metric inputs.
std::vector<ScoredSample> scored_samples(const std::vector<Prediction>& predictions);

struct EvalRun {
  std::string run_id;  // SHA-256 over model id, config and predictions
  std::string model_id;
  std::map<std::string, std::string> config;
  std::vector<Prediction> predictions;
  RunMetrics metrics;
  std::string created_at;
};

/// Computes metrics and run_id. Throws CorruptRunFile when predictions carry
/// different prompt versions or repeat a document id.
EvalRun make_run(std::string model_id, std::map<std::string, std::string> config, std::vector<Prediction> predictions,
                 double threshold = kDefaultThreshold, std::string created_at = utc_timestamp_now());

std::string compute_run_id(const EvalRun& run);

/// JSONL: a header line (run_id, model_id, created_at, config), one line per
/// prediction, then a metrics line.
std::string serialize_run(const EvalRun& run);
/// Throws CorruptRunFile (with line number) or MetricMismatch when the stored
/// metrics differ from a recomputation.
EvalRun parse_run(std::string_view text);

std::filesystem::path run_file_name(const EvalRun& run);
/// Writes <dir>/<slug>-<run_id prefix>.run and returns the path.
std::filesystem::path write_run(const EvalRun& run, const std::filesystem::path& dir);
EvalRun read_run(const std::filesystem::path& path);
/// Every *.run under `dir`, sorted by model id then run id.
std::vector<EvalRun> load_runs(const std::filesystem::path& dir);

/// Table rows: LLM runs, then classifier runs (config "family" = classifier),
/// each sorted by model id, then the fixed random baseline.
///   model,auc,n,scored,unparseable,refusal
std::string summary_table(const std::vector<EvalRun>& runs);

/// Runs sharing an ablation_group, split by reasoning_tokens == 0 vs > 0.
///   model,without_thinking,with_thinking
/// Returns an empty string when no group has both halves.
std::string ablation_table(const std::vector<EvalRun>& runs);

/// model,threshold,accuracy,correct,scored at thresholds 0, 0.05, ..., 1.
std::string accuracy_table(const std::vector<EvalRun>& runs);

struct NamedCurve {
  std::string model_id;
  RocCurve curve;
  double auc = 0.0;
};

/// model,threshold,fpr,tpr
std::string roc_csv(const std::vector<NamedCurve>& curves);
/// Fixed 480x480 canvas; series colours follow sorted model id.
std::string roc_svg(std::vector<NamedCurve> curves);

/// bin_lower,bin_upper,pristine,forged
std::string calibration_csv(const CalibrationHistogram& histogram);
/// One bar per (bin, truth) with a data-count attribute.
std::string calibration_svg(const std::string& model_id, const CalibrationHistogram& histogram);

struct ReportFiles {
  std::vector<std::filesystem::path> written;
};

/// Writes auc_table.csv, ablation_table.csv (when pairs exist), accuracy.csv,
/// roc.csv, roc.svg and calibration_<model>.{csv,svg} under `reports_dir`.
ReportFiles write_reports(const std::vector<EvalRun>& runs, const std::filesystem::path& reports_dir);

}  // namespace forgebench

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "forgebench/cnn.hpp"
#include "forgebench/metrics.hpp"

namespace forgebench {

struct TrainConfig {
  std::uint64_t seed = 0;
  int epochs = 20;
  int batch_size = 32;
  AdamConfig adam;
  double weight_pristine = 1.0;
  double weight_forged = 1.0;
  double threshold = kDefaultThreshold;

  /// Echo of every field as key=value pairs, for run records.
  std::map<std::string, std::string> describe() const;
};

/// Throws ConfigError for non-positive fields.
void validate(const TrainConfig& config);

struct PatchSample {
  std::string parent_id;
  PixelRect rect;
  PatchLabel label = PatchLabel::Pristine;
  SparseInput input;
};

/// One Adam step on the batch. Returns the weighted cross-entropy before the
/// update; throws NonFiniteLoss (with `batch_id`) if it is not finite.
double cnn_train_step(CnnModel& model, const std::vector<const PatchSample*>& batch, const TrainConfig& config,
                      std::size_t batch_id = 0);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean over batches
  double patch_precision = 0.0;
  double patch_recall = 0.0;
  double patch_f1 = 0.0;
  double patch_auc = 0.0;  // NaN when the test patches hold a single class
};

struct TrainResult {
  CnnModel model;
  std::vector<EpochRecord> epochs;
};

/// Throws LeakageDetected when a parent id appears in both sets.
void check_disjoint_parents(const std::vector<PatchSample>& train, const std::vector<PatchSample>& test);

/// Seeded He init, per-epoch seeded shuffle and mini-batch Adam, then a
/// patch-level evaluation on `test` after every epoch.
TrainResult train_eval_loop(const CnnArch& arch, const std::vector<PatchSample>& train,
                            const std::vector<PatchSample>& test, const TrainConfig& config);

std::vector<ScoredSample> score_patches(const CnnModel& model, const std::vector<PatchSample>& patches);

enum class AggregationMode { Or, Mean };

struct PatchResult {
  double score = 0.0;
  bool predicted_forged = false;
};

struct ImageResult {
  double score = 0.0;
  bool predicted_forged = false;
};

/// Or: forged iff any patch is forged, score = max patch score.
/// Mean: score = mean patch score, forged iff score >= threshold.
ImageResult aggregate_image_score(const std::vector<PatchResult>& patches, AggregationMode mode = AggregationMode::Or,
                                  double threshold = kDefaultThreshold);

/// Groups patch scores by parent id (the sample id prefix up to '#') and
/// aggregates each group; image truth is forged iff any patch is forged.
std::vector<ScoredSample> aggregate_by_parent(const std::vector<ScoredSample>& patch_scores,
                                              AggregationMode mode = AggregationMode::Or,
                                              double threshold = kDefaultThreshold);

/// "<parent>#<x>,<y>"
std::string patch_sample_id(const std::string& parent_id, const PixelRect& rect);

}  // namespace forgebench

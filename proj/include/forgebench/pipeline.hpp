#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forgebench/cnn.hpp"
#include "forgebench/dataset.hpp"
#include "forgebench/features.hpp"
#include "forgebench/llm.hpp"
#include "forgebench/svm.hpp"
#include "forgebench/training.hpp"

namespace forgebench {

struct FeatureOptions {
  int clamp_t = kDefaultClampT;
  bool pql = true;
  int n_pristine = kDefaultPristinePatches;
  std::uint64_t seed = 0;
};

struct ImageFeatures {
  FeatureCache cache;
  bool reencoded = false;
  std::string fallback_reason;
};

/// Patches chosen by extract_patches for the record, encoded.
ImageFeatures sampled_features(const DocumentRecord& record, const FeatureOptions& options);

/// Every full 128x128 tile of the image; a tile is forged iff it intersects
/// one of the record's regions.
ImageFeatures tiled_features(const DocumentRecord& record, const FeatureOptions& options);

std::vector<PatchSample> patch_samples(const std::string& parent_id, const FeatureCache& cache);

std::filesystem::path feature_cache_path(const std::filesystem::path& dir, const std::string& id);

/// Patch scores of every tile of each record, reduced per image.
std::vector<ScoredSample> score_images(const CnnModel& model, const std::vector<DocumentRecord>& records,
                                       const FeatureOptions& options, AggregationMode mode = AggregationMode::Or,
                                       double threshold = kDefaultThreshold);

struct SvmExperiment {
  GridSearchResult search;
  SvmModel model;
  StandardizerState standardizer;
  std::vector<ScoredSample> test_scores;
};

/// Preprocess, standardize on train, grid-search with stratified folds, refit
/// the best cell on all of train and score `test`.
SvmExperiment run_svm_experiment(const std::vector<DocumentRecord>& train, const std::vector<DocumentRecord>& test,
                                 const std::vector<GridCell>& grid, int folds, std::uint64_t seed);

/// Wraps classifier scores as Direct-path predictions.
std::vector<Prediction> direct_predictions(const std::string& model_id, const std::vector<ScoredSample>& scores);

std::vector<DocumentRecord> records_in_split(const std::vector<DocumentRecord>& records, Split split);

}  // namespace forgebench

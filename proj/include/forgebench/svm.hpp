#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forgebench/image_io.hpp"

namespace forgebench {

using FeatureRow = std::vector<float>;

inline constexpr int kSvmInputSide = 250;
inline constexpr std::size_t kSvmFeatureLength = static_cast<std::size_t>(kSvmInputSide) * kSvmInputSide * 3;

/// ImageNet channel statistics on [0, 1] intensities.
inline constexpr double kImageNetMean[3] = {0.485, 0.456, 0.406};
inline constexpr double kImageNetStd[3] = {0.229, 0.224, 0.225};

/// Bilinear resample with half-pixel centers (edge-clamped), output as doubles
/// in the source intensity scale. Channel count is preserved.
std::vector<double> bilinear_resize(const Image& image, int out_width, int out_height);

/// Resize to 250x250 RGB (gray inputs are replicated), ImageNet-normalize,
/// flatten in (row, column, channel) order: 187,500 values.
FeatureRow preprocess_pixels(const Image& image);
FeatureRow preprocess_pixels(std::span<const std::uint8_t> encoded);  // throws UndecodableImage

inline constexpr double kStdFloor = 1e-8;

/// z-score statistics; population standard deviation floored at 1e-8.
struct StandardizerState {
  std::vector<double> mean;
  std::vector<double> std;
};

StandardizerState standardize_fit(const std::vector<FeatureRow>& train);
FeatureRow standardize_apply(const StandardizerState& state, const FeatureRow& row);

enum class KernelKind { Linear, Rbf };

struct Kernel {
  KernelKind kind = KernelKind::Linear;
  double gamma = 0.0;  // Rbf only

  double operator()(std::span<const float> a, std::span<const float> b) const;
};

struct SupportVector {
  FeatureRow x;
  int y = 1;  // +1 forged, -1 pristine
  double alpha = 0.0;
};

struct SvmModel {
  Kernel kernel;
  double c = 1.0;
  double weight_positive = 1.0;
  double weight_negative = 1.0;
  std::vector<SupportVector> support;
  double bias = 0.0;
  std::size_t dimension = 0;

  double box(int y) const { return c * (y > 0 ? weight_positive : weight_negative); }
};

struct SvmTrainOptions {
  Kernel kernel;
  double c = 1.0;
  double weight_positive = 1.0;
  double weight_negative = 1.0;
  double tol = 1e-3;
  int max_passes = 5;
  std::uint64_t seed = 0;
  int max_sweeps = 10000;  // hard stop on pathological inputs
};

/// Soft-margin dual by SMO pair updates with per-class box constraints
/// C_i = C * weight(y_i). Labels must be +1 / -1.
SvmModel svm_train(const std::vector<FeatureRow>& features, const std::vector<int>& labels,
                   const SvmTrainOptions& options);

struct SvmPrediction {
  double decision = 0.0;
  double score = 0.5;  // logistic(decision)
};

SvmPrediction svm_predict(const SvmModel& model, std::span<const float> x);

double logistic(double z);

struct GridCell {
  KernelKind kernel = KernelKind::Linear;
  double gamma = 0.0;  // 0 with Rbf means 1 / dimension
  double c = 1.0;
  double minority_weight = 1.0;
};

struct GridCellResult {
  GridCell cell;
  std::vector<double> fold_f1;
  double mean_f1 = 0.0;
};

struct GridSearchResult {
  GridCell best;
  std::vector<GridCellResult> cells;
};

/// Default search space: C in {0.1, 1, 10}, gamma in {1/d, 0.01},
/// minority weight in {1, 5, 10}, both kernels.
std::vector<GridCell> default_grid();

/// Stratified fold id per row; each class is shuffled with `seed` and dealt
/// round-robin. Throws InsufficientClassMembers when a class has fewer than k
/// members.
std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed);

/// Highest mean F1; ties go to smaller C, then Linear over Rbf, then smaller
/// gamma, then smaller minority weight.
GridCell select_best(const std::vector<GridCellResult>& cells);

GridSearchResult grid_search(const std::vector<FeatureRow>& features, const std::vector<int>& labels,
                             const std::vector<GridCell>& grid, int folds, std::uint64_t seed);

/// Options for a cell given the training labels: the minority class gets the
/// cell's weight, and Rbf gamma 0 resolves to 1 / dimension.
SvmTrainOptions options_for_cell(const GridCell& cell, const std::vector<int>& labels, std::size_t dimension);

}  // namespace forgebench

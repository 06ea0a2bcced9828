#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "forgebench/dataset.hpp"

namespace forgebench {

struct ScoredSample {
  std::string id;
  double score = 0.0;  // P(forgery), finite, in [0, 1]
  Label truth = Label::Pristine;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;

  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

/// Points run from (0,0) to (1,1). thresholds[i] is the cut that produced
/// points[i] (predict forged iff score >= threshold); thresholds[0] is +inf.
struct RocCurve {
  std::vector<RocPoint> points;
  std::vector<double> thresholds;
};

/// Group sweep over distinct scores in descending order: all samples sharing a
/// score enter together, so ties produce diagonal segments. Throws
/// SingleClassInput unless both classes are present.
RocCurve roc_curve(const std::vector<ScoredSample>& samples);

/// Trapezoidal area under the curve.
double auc_trapezoid(const RocCurve& curve);

/// Mann-Whitney statistic: mean over (forged, pristine) pairs of
/// 1 / 0.5 / 0 for greater / equal / lower forged score.
double auc_pairwise(const std::vector<ScoredSample>& samples);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted forged
  double recall = 0.0;     // 0 when no forged samples
  double f1 = 0.0;         // 0 when precision + recall == 0

  std::size_t total() const { return tp + fp + tn + fn; }
};

inline constexpr double kDefaultThreshold = 0.5;

/// Predicted forged iff score >= threshold.
Confusion confusion_at_threshold(const std::vector<ScoredSample>& samples, double threshold = kDefaultThreshold);

struct ThresholdAccuracy {
  double threshold = 0.0;
  double accuracy = 0.0;
};

/// Accuracy at each requested threshold.
std::vector<ThresholdAccuracy> accuracy_by_threshold(const std::vector<ScoredSample>& samples,
                                                     const std::vector<double>& thresholds);

inline constexpr double kDefaultBinWidth = 0.05;

struct CalibrationHistogram {
  double bin_width = kDefaultBinWidth;
  std::vector<std::size_t> pristine;  // counts per bin
  std::vector<std::size_t> forged;

  std::size_t bins() const { return pristine.size(); }
};

/// Bin index is floor(score * bins) with score 1.0 folded into the last bin.
/// Throws InvalidBinWidth unless 1 / bin_width is a whole number.
CalibrationHistogram calibration_histogram(const std::vector<ScoredSample>& samples,
                                           double bin_width = kDefaultBinWidth);

/// Throws InvalidScore for non-finite or out-of-range scores.
void validate_scores(const std::vector<ScoredSample>& samples);

}  // namespace forgebench

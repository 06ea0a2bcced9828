#include "forgebench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "forgebench/error.hpp"

namespace forgebench {

void validate_scores(const std::vector<ScoredSample>& samples) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
      throw Error(ErrorCode::InvalidScore, s.id + " has score outside [0, 1]");
    }
  }
}

namespace {

std::pair<std::size_t, std::size_t> class_counts(const std::vector<ScoredSample>& samples) {
  std::size_t pos = 0;
  for (const auto& s : samples) pos += s.truth == Label::Forged ? 1 : 0;
  return {pos, samples.size() - pos};
}

}  // namespace

RocCurve roc_curve(const std::vector<ScoredSample>& samples) {
  const auto [positives, negatives] = class_counts(samples);
  if (positives == 0 || negatives == 0) throw Error(ErrorCode::SingleClassInput, "ROC needs both classes");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score > samples[b].score; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double score = samples[order[i]].score;
    while (i < order.size() && samples[order[i]].score == score) {
      (samples[order[i]].truth == Label::Forged ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
    curve.thresholds.push_back(score);
  }
  return curve;
}

double auc_trapezoid(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double auc_pairwise(const std::vector<ScoredSample>& samples) {
  const auto [positives, negatives] = class_counts(samples);
  if (positives == 0 || negatives == 0) throw Error(ErrorCode::SingleClassInput, "AUC needs both classes");
  // Credits are counted in halves so the sum stays an exact integer.
  std::size_t half_credits = 0;
  for (const auto& f : samples) {
    if (f.truth != Label::Forged) continue;
    for (const auto& p : samples) {
      if (p.truth != Label::Pristine) continue;
      if (f.score > p.score) {
        half_credits += 2;
      } else if (f.score == p.score) {
        half_credits += 1;
      }
    }
  }
  return static_cast<double>(half_credits) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

Confusion confusion_at_threshold(const std::vector<ScoredSample>& samples, double threshold) {
  Confusion c;
  for (const auto& s : samples) {
    const bool predicted = s.score >= threshold;
    const bool actual = s.truth == Label::Forged;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  const auto n = static_cast<double>(c.total());
  c.accuracy = n > 0 ? static_cast<double>(c.tp + c.tn) / n : 0.0;
  c.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  c.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  c.f1 = c.precision + c.recall > 0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
  return c;
}

std::vector<ThresholdAccuracy> accuracy_by_threshold(const std::vector<ScoredSample>& samples,
                                                     const std::vector<double>& thresholds) {
  std::vector<ThresholdAccuracy> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) out.push_back({t, confusion_at_threshold(samples, t).accuracy});
  return out;
}

CalibrationHistogram calibration_histogram(const std::vector<ScoredSample>& samples, double bin_width) {
  if (!(bin_width > 0.0) || bin_width > 1.0) throw Error(ErrorCode::InvalidBinWidth, std::to_string(bin_width));
  const double count = 1.0 / bin_width;
  const double rounded = std::round(count);
  if (std::abs(count - rounded) > 1e-9 * rounded) {
    throw Error(ErrorCode::InvalidBinWidth, std::to_string(bin_width) + " does not divide 1");
  }
  validate_scores(samples);
  const auto bins = static_cast<std::size_t>(rounded);
  CalibrationHistogram hist;
  hist.bin_width = bin_width;
  hist.pristine.assign(bins, 0);
  hist.forged.assign(bins, 0);
  for (const auto& s : samples) {
    auto index = static_cast<std::size_t>(std::floor(s.score * static_cast<double>(bins)));
    index = std::min(index, bins - 1);
    (s.truth == Label::Forged ? hist.forged : hist.pristine)[index] += 1;
  }
  return hist;
}

}  // namespace forgebench

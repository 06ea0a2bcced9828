#include "forgebench/svm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "forgebench/error.hpp"
#include "forgebench/metrics.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

std::vector<double> bilinear_resize(const Image& image, int out_width, int out_height) {
  const int ch = image.channels;
  std::vector<double> out(static_cast<std::size_t>(out_width) * out_height * ch);
  const double sx = static_cast<double>(image.width) / out_width;
  const double sy = static_cast<double>(image.height) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < ch; ++c) {
        const double top = image.at(x0, y0, c) * (1.0 - wx) + image.at(x1, y0, c) * wx;
        const double bottom = image.at(x0, y1, c) * (1.0 - wx) + image.at(x1, y1, c) * wx;
        out[(static_cast<std::size_t>(oy) * out_width + ox) * ch + c] = top * (1.0 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

FeatureRow preprocess_pixels(const Image& image) {
  if (image.width <= 0 || image.height <= 0 || (image.channels != 1 && image.channels != 3)) {
    throw Error(ErrorCode::UndecodableImage, "expected a non-empty gray or RGB image");
  }
  const auto resized = bilinear_resize(image, kSvmInputSide, kSvmInputSide);
  FeatureRow out(kSvmFeatureLength);
  const std::size_t pixels = static_cast<std::size_t>(kSvmInputSide) * kSvmInputSide;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < 3; ++c) {
      const double v = resized[p * image.channels + (image.channels == 3 ? c : 0)] / 255.0;
      out[p * 3 + c] = static_cast<float>((v - kImageNetMean[c]) / kImageNetStd[c]);
    }
  }
  return out;
}

FeatureRow preprocess_pixels(std::span<const std::uint8_t> encoded) {
  return preprocess_pixels(decode_image(encoded));
}

StandardizerState standardize_fit(const std::vector<FeatureRow>& train) {
  if (train.size() < 2) throw Error(ErrorCode::DegenerateTrainingSet, "need at least 2 training rows");
  const std::size_t d = train.front().size();
  StandardizerState state;
  state.mean.assign(d, 0.0);
  state.std.assign(d, 0.0);
  for (const auto& row : train) {
    if (row.size() != d) throw Error(ErrorCode::DimensionMismatch, "ragged training rows");
    for (std::size_t j = 0; j < d; ++j) state.mean[j] += row[j];
  }
  const double n = static_cast<double>(train.size());
  for (auto& m : state.mean) m /= n;
  for (const auto& row : train) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = row[j] - state.mean[j];
      state.std[j] += diff * diff;
    }
  }
  for (auto& s : state.std) s = std::max(std::sqrt(s / n), kStdFloor);
  return state;
}

FeatureRow standardize_apply(const StandardizerState& state, const FeatureRow& row) {
  if (row.size() != state.mean.size()) throw Error(ErrorCode::DimensionMismatch, "row length differs from fit");
  FeatureRow out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    out[j] = static_cast<float>((row[j] - state.mean[j]) / state.std[j]);
  }
  return out;
}

double Kernel::operator()(std::span<const float> a, std::span<const float> b) const {
  if (kind == KernelKind::Linear) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
    return dot;
  }
  double dist = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    dist += d * d;
  }
  return std::exp(-gamma * dist);
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

SvmModel svm_train(const std::vector<FeatureRow>& features, const std::vector<int>& labels,
                   const SvmTrainOptions& options) {
  if (!(options.c > 0.0) || !(options.weight_positive > 0.0) || !(options.weight_negative > 0.0)) {
    throw Error(ErrorCode::NonPositiveC, "C and class weights must be positive");
  }
  if (features.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "features/labels length");
  const std::size_t n = features.size();
  bool has_pos = false;
  bool has_neg = false;
  for (int y : labels) {
    if (y != 1 && y != -1) throw Error(ErrorCode::DimensionMismatch, "labels must be +1 / -1");
    (y > 0 ? has_pos : has_neg) = true;
  }
  if (n < 2 || !has_pos || !has_neg) throw Error(ErrorCode::SingleClassTrainingSet, "need both classes");
  const std::size_t dim = features.front().size();
  for (const auto& row : features) {
    if (row.size() != dim) throw Error(ErrorCode::DimensionMismatch, "ragged feature rows");
  }

  SvmModel model;
  model.kernel = options.kernel;
  model.c = options.c;
  model.weight_positive = options.weight_positive;
  model.weight_negative = options.weight_negative;
  model.dimension = dim;

  std::vector<double> gram(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double k = options.kernel(features[i], features[j]);
      gram[i * n + j] = k;
      gram[j * n + i] = k;
    }
  }
  auto K = [&](std::size_t i, std::size_t j) { return gram[i * n + j]; };

  std::vector<double> alpha(n, 0.0);
  std::vector<double> box(n);
  for (std::size_t i = 0; i < n; ++i) box[i] = model.box(labels[i]);
  double b = 0.0;
  auto decision = [&](std::size_t i) {
    double f = b;
    for (std::size_t k = 0; k < n; ++k) {
      if (alpha[k] > 0.0) f += alpha[k] * labels[k] * K(k, i);
    }
    return f;
  };

  std::mt19937_64 rng(options.seed);
  const double tol = options.tol;
  int passes = 0;
  int sweeps = 0;
  while (passes < options.max_passes && sweeps < options.max_sweeps) {
    ++sweeps;
    int changed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double yi = labels[i];
      const double ei = decision(i) - yi;
      const bool violates = (yi * ei < -tol && alpha[i] < box[i]) || (yi * ei > tol && alpha[i] > 0.0);
      if (!violates) continue;
      std::size_t j = uniform_index(rng, n - 1);
      if (j >= i) ++j;
      const double yj = labels[j];
      const double ej = decision(j) - yj;
      const double ai_old = alpha[i];
      const double aj_old = alpha[j];
      double lo = 0.0;
      double hi = 0.0;
      if (labels[i] != labels[j]) {
        lo = std::max(0.0, aj_old - ai_old);
        hi = std::min(box[j], box[i] + aj_old - ai_old);
      } else {
        lo = std::max(0.0, ai_old + aj_old - box[i]);
        hi = std::min(box[j], ai_old + aj_old);
      }
      if (lo >= hi) continue;
      const double eta = 2.0 * K(i, j) - K(i, i) - K(j, j);
      if (eta >= 0.0) continue;
      double aj = std::clamp(aj_old - yj * (ei - ej) / eta, lo, hi);
      if (std::abs(aj - aj_old) < 1e-5) continue;
      double ai = ai_old + yi * yj * (aj_old - aj);
      ai = std::clamp(ai, 0.0, box[i]);
      alpha[i] = ai;
      alpha[j] = aj;
      const double b1 = b - ei - yi * (ai - ai_old) * K(i, i) - yj * (aj - aj_old) * K(i, j);
      const double b2 = b - ej - yi * (ai - ai_old) * K(i, j) - yj * (aj - aj_old) * K(j, j);
      if (ai > 0.0 && ai < box[i]) b = b1;
      else if (aj > 0.0 && aj < box[j]) b = b2;
      else b = 0.5 * (b1 + b2);
      ++changed;
    }
    passes = changed == 0 ? passes + 1 : 0;
  }

  model.bias = b;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > 0.0) model.support.push_back({features[i], labels[i], alpha[i]});
  }
  return model;
}

SvmPrediction svm_predict(const SvmModel& model, std::span<const float> x) {
  if (x.size() != model.dimension) throw Error(ErrorCode::DimensionMismatch, "feature length differs from model");
  double f = model.bias;
  for (const auto& sv : model.support) f += sv.alpha * sv.y * model.kernel(sv.x, x);
  return {f, logistic(f)};
}

std::vector<GridCell> default_grid() {
  std::vector<GridCell> grid;
  for (double c : {0.1, 1.0, 10.0}) {
    for (double w : {1.0, 5.0, 10.0}) {
      grid.push_back({KernelKind::Linear, 0.0, c, w});
      for (double gamma : {0.0, 0.01}) grid.push_back({KernelKind::Rbf, gamma, c, w});
    }
  }
  return grid;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::ConfigError, "need at least 2 folds");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] > 0 ? pos : neg).push_back(i);
  if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::InsufficientClassMembers,
                "each class needs at least " + std::to_string(k) + " members for " + std::to_string(k) + " folds");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> fold(labels.size(), 0);
  // Negatives continue the round-robin where positives stopped so fold sizes
  // stay within one of each other.
  std::size_t dealt = 0;
  for (auto* members : {&pos, &neg}) {
    shuffle_in_place(rng, *members);
    for (std::size_t idx : *members) fold[idx] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  }
  return fold;
}

GridCell select_best(const std::vector<GridCellResult>& cells) {
  if (cells.empty()) throw Error(ErrorCode::ConfigError, "empty parameter grid");
  auto key = [](const GridCellResult& r) {
    return std::make_tuple(-r.mean_f1, r.cell.c, r.cell.kernel == KernelKind::Linear ? 0 : 1, r.cell.gamma,
                           r.cell.minority_weight);
  };
  const auto best = std::min_element(cells.begin(), cells.end(),
                                     [&](const GridCellResult& a, const GridCellResult& b) { return key(a) < key(b); });
  return best->cell;
}

SvmTrainOptions options_for_cell(const GridCell& cell, const std::vector<int>& labels, std::size_t dimension) {
  std::size_t pos = 0;
  for (int y : labels) pos += y > 0 ? 1 : 0;
  const bool positive_minority = pos * 2 <= labels.size();
  SvmTrainOptions options;
  options.kernel.kind = cell.kernel;
  options.kernel.gamma = cell.kernel == KernelKind::Rbf
                             ? (cell.gamma > 0.0 ? cell.gamma : 1.0 / static_cast<double>(std::max<std::size_t>(dimension, 1)))
                             : 0.0;
  options.c = cell.c;
  options.weight_positive = positive_minority ? cell.minority_weight : 1.0;
  options.weight_negative = positive_minority ? 1.0 : cell.minority_weight;
  return options;
}

GridSearchResult grid_search(const std::vector<FeatureRow>& features, const std::vector<int>& labels,
                             const std::vector<GridCell>& grid, int folds, std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::ConfigError, "empty parameter grid");
  const auto assignment = stratified_folds(labels, folds, seed);
  GridSearchResult result;
  for (const auto& cell : grid) {
    GridCellResult cell_result{cell, {}, 0.0};
    for (int f = 0; f < folds; ++f) {
      std::vector<FeatureRow> train_x;
      std::vector<int> train_y;
      std::vector<std::size_t> held_out;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (assignment[i] == f) {
          held_out.push_back(i);
        } else {
          train_x.push_back(features[i]);
          train_y.push_back(labels[i]);
        }
      }
      auto options = options_for_cell(cell, train_y, features.front().size());
      options.seed = seed + static_cast<std::uint64_t>(f);
      const SvmModel model = svm_train(train_x, train_y, options);
      std::vector<ScoredSample> scored;
      for (std::size_t i : held_out) {
        scored.push_back({std::to_string(i), svm_predict(model, features[i]).score,
                          labels[i] > 0 ? Label::Forged : Label::Pristine});
      }
      cell_result.fold_f1.push_back(confusion_at_threshold(scored, 0.5).f1);
    }
    double sum = 0.0;
    for (double v : cell_result.fold_f1) sum += v;
    cell_result.mean_f1 = sum / static_cast<double>(folds);
    result.cells.push_back(std::move(cell_result));
  }
  result.best = select_best(result.cells);
  return result;
}

}  // namespace forgebench

#include "forgebench/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "forgebench/error.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

std::map<std::string, std::string> TrainConfig::describe() const {
  return {
      {"seed", std::to_string(seed)},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"learning_rate", fmt::format("{}", adam.learning_rate)},
      {"adam_beta1", fmt::format("{}", adam.beta1)},
      {"adam_beta2", fmt::format("{}", adam.beta2)},
      {"adam_epsilon", fmt::format("{}", adam.epsilon)},
      {"weight_pristine", fmt::format("{}", weight_pristine)},
      {"weight_forged", fmt::format("{}", weight_forged)},
      {"threshold", fmt::format("{}", threshold)},
  };
}

void validate(const TrainConfig& c) {
  const bool ok = c.epochs > 0 && c.batch_size > 0 && c.adam.learning_rate > 0 && c.adam.beta1 > 0 &&
                  c.adam.beta1 < 1 && c.adam.beta2 > 0 && c.adam.beta2 < 1 && c.adam.epsilon > 0 &&
                  c.weight_pristine > 0 && c.weight_forged > 0;
  if (!ok) throw Error(ErrorCode::ConfigError, "training configuration values must be positive (betas in (0,1))");
}

double cnn_train_step(CnnModel& model, const std::vector<const PatchSample*>& batch, const TrainConfig& config,
                      std::size_t batch_id) {
  if (batch.empty()) throw Error(ErrorCode::EmptyPatchSet, "empty batch");
  std::vector<const SparseInput*> inputs;
  std::vector<int> labels;
  inputs.reserve(batch.size());
  for (const auto* s : batch) {
    inputs.push_back(&s->input);
    labels.push_back(s->label == PatchLabel::Forged ? 1 : 0);
  }
  const double weights[2] = {config.weight_pristine, config.weight_forged};
  std::vector<double> grads;
  const double loss = model.loss_and_gradient(inputs, labels, weights, grads);
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "batch " + std::to_string(batch_id));
  model.adam().step_update(model.parameters(), grads, config.adam);
  return loss;
}

void check_disjoint_parents(const std::vector<PatchSample>& train, const std::vector<PatchSample>& test) {
  std::set<std::string> parents;
  for (const auto& s : train) parents.insert(s.parent_id);
  for (const auto& s : test) {
    if (parents.count(s.parent_id)) throw Error(ErrorCode::LeakageDetected, s.parent_id + " is in both splits");
  }
}

std::string patch_sample_id(const std::string& parent_id, const PixelRect& rect) {
  return parent_id + "#" + std::to_string(rect.x) + "," + std::to_string(rect.y);
}

std::vector<ScoredSample> score_patches(const CnnModel& model, const std::vector<PatchSample>& patches) {
  std::vector<ScoredSample> out;
  out.reserve(patches.size());
  for (const auto& p : patches) {
    out.push_back({patch_sample_id(p.parent_id, p.rect), model.forward(p.input).probability_forged,
                   p.label == PatchLabel::Forged ? Label::Forged : Label::Pristine});
  }
  return out;
}

TrainResult train_eval_loop(const CnnArch& arch, const std::vector<PatchSample>& train,
                            const std::vector<PatchSample>& test, const TrainConfig& config) {
  validate(config);
  if (train.empty()) throw Error(ErrorCode::EmptyPatchSet, "no training patches");
  check_disjoint_parents(train, test);
  TrainResult result{CnnModel(arch, config.seed), {}};
  std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t batch_id = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_in_place(order_rng, order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const PatchSample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      loss_sum += cnn_train_step(result.model, batch, config, batch_id++);
      ++batches;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(batches);
    record.patch_auc = std::numeric_limits<double>::quiet_NaN();
    if (!test.empty()) {
      const auto scored = score_patches(result.model, test);
      const auto c = confusion_at_threshold(scored, config.threshold);
      record.patch_precision = c.precision;
      record.patch_recall = c.recall;
      record.patch_f1 = c.f1;
      if (c.tp + c.fn > 0 && c.tn + c.fp > 0) record.patch_auc = auc_trapezoid(roc_curve(scored));
    }
    result.epochs.push_back(record);
  }
  return result;
}

ImageResult aggregate_image_score(const std::vector<PatchResult>& patches, AggregationMode mode, double threshold) {
  if (patches.empty()) throw Error(ErrorCode::EmptyPatchSet, "no patch results to aggregate");
  ImageResult out;
  if (mode == AggregationMode::Or) {
    out.score = patches.front().score;
    for (const auto& p : patches) {
      out.score = std::max(out.score, p.score);
      out.predicted_forged = out.predicted_forged || p.predicted_forged;
    }
  } else {
    double sum = 0.0;
    for (const auto& p : patches) sum += p.score;
    out.score = sum / static_cast<double>(patches.size());
    out.predicted_forged = out.score >= threshold;
  }
  return out;
}

std::vector<ScoredSample> aggregate_by_parent(const std::vector<ScoredSample>& patch_scores, AggregationMode mode,
                                              double threshold) {
  std::map<std::string, std::pair<std::vector<PatchResult>, bool>> groups;
  for (const auto& s : patch_scores) {
    const auto parent = s.id.substr(0, s.id.find('#'));
    auto& g = groups[parent];
    g.first.push_back({s.score, s.score >= threshold});
    g.second = g.second || s.truth == Label::Forged;
  }
  std::vector<ScoredSample> out;
  for (const auto& [parent, group] : groups) {
    out.push_back({parent, aggregate_image_score(group.first, mode, threshold).score,
                   group.second ? Label::Forged : Label::Pristine});
  }
  return out;
}

}  // namespace forgebench

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "forgebench/features.hpp"

namespace forgebench {

/// Layer plan: each conv stage is 3x3 same-padding conv, ReLU, 2x2 max-pool;
/// each dense stage is affine + ReLU; a final affine layer emits 2 logits
/// (index 0 pristine, 1 forged).
struct CnnArch {
  int in_channels = 0;
  int in_height = kPatchBlocks;
  int in_width = kPatchBlocks;
  std::vector<int> conv_channels{16, 32};
  std::vector<int> dense_units{64};

  friend bool operator==(const CnnArch&, const CnnArch&) = default;
};

CnnArch default_arch(int clamp_t = kDefaultClampT);

/// Input volume (C, H, W) kept as its nonzero entries. One-hot DCT features
/// have 64 nonzeros per cell, so the first convolution runs over these only.
struct SparseInput {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> index;  // (c * H + y) * W + x
  std::vector<float> value;

  static SparseInput from_dense(std::span<const float> dense, int channels, int height, int width);
  static SparseInput from_tensor(const FeatureTensor& tensor);
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam moments over a flat parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  void step_update(std::span<double> params, std::span<const double> grads, const AdamConfig& config);
};

struct LayerOffsets {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in = 0;   // input channels (conv) or features (dense)
  int out = 0;  // output channels / units
  int height = 0;  // conv input spatial extent
  int width = 0;
};

class CnnModel {
 public:
  /// He-normal weights (std sqrt(2 / fan_in)), zero biases. Throws
  /// ShapeMismatch when a conv stage sees an odd or empty spatial extent.
  CnnModel(const CnnArch& arch, std::uint64_t seed);

  const CnnArch& arch() const { return arch_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  AdamState& adam() { return adam_; }
  const AdamState& adam() const { return adam_; }

  struct Output {
    double logits[2] = {0.0, 0.0};
    double probability_forged = 0.5;
  };

  Output forward(const SparseInput& input) const;
  Output forward(const FeatureTensor& tensor) const;

  /// Class-weighted cross-entropy over the batch, normalized by the summed
  /// weights. Accumulates d(loss)/d(params) into `grads` (resized and zeroed
  /// here) and returns the loss.
  double loss_and_gradient(std::span<const SparseInput* const> inputs, std::span<const int> labels,
                           const double class_weights[2], std::vector<double>& grads) const;

  const std::vector<LayerOffsets>& conv_layers() const { return conv_; }
  const std::vector<LayerOffsets>& dense_layers() const { return dense_; }

  /// Binary checkpoint (little-endian):
  ///   char[4] "FBCN", u16 version 1
  ///   u32 in_channels, in_height, in_width
  ///   u32 n_conv, u32[n_conv] channels, u32 n_dense, u32[n_dense] units
  ///   u64 parameter count, f32[count] parameters
  ///   u8 has_adam; if set: u64 step, f32[count] m, f32[count] v
  std::string serialize(bool include_adam = true) const;
  static CnnModel deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path, bool include_adam = true) const;
  static CnnModel load(const std::filesystem::path& path);

 private:
  CnnModel() = default;
  void layout();

  struct Trace;
  void run_forward(const SparseInput& input, Trace& trace) const;

  CnnArch arch_;
  std::vector<LayerOffsets> conv_;
  std::vector<LayerOffsets> dense_;  // includes the 2-logit output layer
  std::vector<double> params_;
  AdamState adam_;
};

/// Closed-form parameter count for an architecture.
std::size_t count_parameters(const CnnArch& arch);

/// Numerically stable two-class softmax: P(class 1).
double softmax_forged(double logit_pristine, double logit_forged);

}  // namespace forgebench

#include "forgebench/cnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "forgebench/error.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

CnnArch default_arch(int clamp_t) {
  CnnArch arch;
  arch.in_channels = kDctModes * (2 * clamp_t + 1);
  return arch;
}

SparseInput SparseInput::from_dense(std::span<const float> dense, int channels, int height, int width) {
  if (dense.size() != static_cast<std::size_t>(channels) * height * width) {
    throw Error(ErrorCode::ShapeMismatch, "dense input size does not match (C, H, W)");
  }
  SparseInput out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0f) {
      out.index.push_back(static_cast<std::uint32_t>(i));
      out.value.push_back(dense[i]);
    }
  }
  return out;
}

SparseInput SparseInput::from_tensor(const FeatureTensor& tensor) {
  return from_dense(tensor.values, tensor.channels(), kPatchBlocks, kPatchBlocks);
}

void AdamState::step_update(std::span<double> params, std::span<const double> grads, const AdamConfig& config) {
  if (m.size() != params.size()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  ++step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grads[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

std::size_t count_parameters(const CnnArch& arch) {
  std::size_t total = 0;
  int channels = arch.in_channels;
  int h = arch.in_height;
  int w = arch.in_width;
  for (int oc : arch.conv_channels) {
    total += static_cast<std::size_t>(oc) * channels * 9 + oc;
    channels = oc;
    h /= 2;
    w /= 2;
  }
  std::size_t features = static_cast<std::size_t>(channels) * h * w;
  for (int units : arch.dense_units) {
    total += features * units + units;
    features = units;
  }
  return total + features * 2 + 2;
}

double softmax_forged(double logit_pristine, double logit_forged) {
  const double d = logit_forged - logit_pristine;
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

void CnnModel::layout() {
  const CnnArch& a = arch_;
  if (a.in_channels <= 0 || a.in_height <= 0 || a.in_width <= 0) {
    throw Error(ErrorCode::ShapeMismatch, "input shape must be positive");
  }
  conv_.clear();
  dense_.clear();
  std::size_t offset = 0;
  int channels = a.in_channels;
  int h = a.in_height;
  int w = a.in_width;
  for (int oc : a.conv_channels) {
    if (oc <= 0) throw Error(ErrorCode::ShapeMismatch, "conv stage needs positive channels");
    if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0) {
      throw Error(ErrorCode::ShapeMismatch, "conv stage input " + std::to_string(h) + "x" + std::to_string(w) +
                                                " cannot be 2x2 pooled");
    }
    LayerOffsets layer;
    layer.in = channels;
    layer.out = oc;
    layer.height = h;
    layer.width = w;
    layer.weight = offset;
    offset += static_cast<std::size_t>(oc) * channels * 9;
    layer.bias = offset;
    offset += static_cast<std::size_t>(oc);
    conv_.push_back(layer);
    channels = oc;
    h /= 2;
    w /= 2;
  }
  int features = channels * h * w;
  auto add_dense = [&](int units) {
    if (units <= 0) throw Error(ErrorCode::ShapeMismatch, "dense stage needs positive units");
    LayerOffsets layer;
    layer.in = features;
    layer.out = units;
    layer.weight = offset;
    offset += static_cast<std::size_t>(units) * features;
    layer.bias = offset;
    offset += static_cast<std::size_t>(units);
    dense_.push_back(layer);
    features = units;
  };
  for (int units : a.dense_units) add_dense(units);
  add_dense(2);
  params_.assign(offset, 0.0);
}

CnnModel::CnnModel(const CnnArch& arch, std::uint64_t seed) : arch_(arch) {
  layout();
  std::mt19937_64 rng(seed);
  auto init = [&](std::size_t begin, std::size_t count, double fan_in) {
    const double scale = std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < count; ++i) params_[begin + i] = scale * standard_normal(rng);
  };
  for (const auto& l : conv_) init(l.weight, static_cast<std::size_t>(l.out) * l.in * 9, l.in * 9.0);
  for (const auto& l : dense_) init(l.weight, static_cast<std::size_t>(l.out) * l.in, static_cast<double>(l.in));
}

namespace {

/// Same-padding 3x3 convolution driven by the nonzero input entries.
template <typename T>
void conv_forward(const std::vector<std::uint32_t>& index, const std::vector<T>& value, const LayerOffsets& l,
                  const double* params, std::vector<double>& out) {
  const int h = l.height;
  const int w = l.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  out.assign(static_cast<std::size_t>(l.out) * plane, 0.0);
  for (int oc = 0; oc < l.out; ++oc) {
    const double b = params[l.bias + oc];
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(oc * plane),
              out.begin() + static_cast<std::ptrdiff_t>((oc + 1) * plane), b);
  }
  for (std::size_t n = 0; n < index.size(); ++n) {
    const std::uint32_t flat = index[n];
    const int ic = static_cast<int>(flat / plane);
    const int y = static_cast<int>((flat % plane) / w);
    const int x = static_cast<int>(flat % w);
    const double v = value[n];
    for (int oc = 0; oc < l.out; ++oc) {
      const double* k = params + l.weight + (static_cast<std::size_t>(oc) * l.in + ic) * 9;
      double* o = out.data() + oc * plane;
      for (int ky = 0; ky < 3; ++ky) {
        const int oy = y - ky + 1;
        if (oy < 0 || oy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ox = x - kx + 1;
          if (ox < 0 || ox >= w) continue;
          o[oy * w + ox] += k[ky * 3 + kx] * v;
        }
      }
    }
  }
}

/// Accumulates weight/bias gradients and, when `d_in` is given, the input
/// gradient at the nonzero input entries (zero entries sit behind a ReLU whose
/// derivative is 0, so their gradient is never needed).
template <typename T>
void conv_backward(const std::vector<std::uint32_t>& index, const std::vector<T>& value, const LayerOffsets& l,
                   const double* params, const std::vector<double>& d_out, double* grads, std::vector<double>* d_in) {
  const int h = l.height;
  const int w = l.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int oc = 0; oc < l.out; ++oc) {
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += d_out[oc * plane + p];
    grads[l.bias + oc] += s;
  }
  if (d_in) d_in->assign(static_cast<std::size_t>(l.in) * plane, 0.0);
  for (std::size_t n = 0; n < index.size(); ++n) {
    const std::uint32_t flat = index[n];
    const int ic = static_cast<int>(flat / plane);
    const int y = static_cast<int>((flat % plane) / w);
    const int x = static_cast<int>(flat % w);
    const double v = value[n];
    double din = 0.0;
    for (int oc = 0; oc < l.out; ++oc) {
      const std::size_t kbase = l.weight + (static_cast<std::size_t>(oc) * l.in + ic) * 9;
      const double* g = d_out.data() + oc * plane;
      for (int ky = 0; ky < 3; ++ky) {
        const int oy = y - ky + 1;
        if (oy < 0 || oy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ox = x - kx + 1;
          if (ox < 0 || ox >= w) continue;
          const double go = g[oy * w + ox];
          grads[kbase + ky * 3 + kx] += go * v;
          din += params[kbase + ky * 3 + kx] * go;
        }
      }
    }
    if (d_in) (*d_in)[flat] = din;
  }
}

}  // namespace

struct CnnModel::Trace {
  const SparseInput* input = nullptr;
  // Per conv stage: sparse view of the stage input (stage 0 uses `input`),
  // post-ReLU activations, and the argmax source of each pooled value.
  std::vector<std::vector<std::uint32_t>> in_index;
  std::vector<std::vector<double>> in_value;
  std::vector<std::vector<double>> activation;
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<std::vector<double>> dense_in;   // input to each dense layer
  std::vector<std::vector<double>> dense_pre;  // pre-activation output
  double logits[2] = {0.0, 0.0};
};

void CnnModel::run_forward(const SparseInput& input, Trace& t) const {
  if (input.channels != arch_.in_channels || input.height != arch_.in_height || input.width != arch_.in_width) {
    throw Error(ErrorCode::ShapeMismatch, "input (" + std::to_string(input.channels) + "," +
                                              std::to_string(input.height) + "," + std::to_string(input.width) +
                                              ") does not match the architecture");
  }
  t.input = &input;
  const std::size_t stages = conv_.size();
  t.in_index.resize(stages);
  t.in_value.resize(stages);
  t.activation.resize(stages);
  t.argmax.resize(stages);
  std::vector<double> pooled;
  for (std::size_t s = 0; s < stages; ++s) {
    const LayerOffsets& l = conv_[s];
    if (s == 0) {
      conv_forward(input.index, input.value, l, params_.data(), t.activation[s]);
    } else {
      auto& idx = t.in_index[s];
      auto& val = t.in_value[s];
      idx.clear();
      val.clear();
      for (std::size_t i = 0; i < pooled.size(); ++i) {
        if (pooled[i] != 0.0) {
          idx.push_back(static_cast<std::uint32_t>(i));
          val.push_back(pooled[i]);
        }
      }
      conv_forward(idx, val, l, params_.data(), t.activation[s]);
    }
    auto& act = t.activation[s];
    for (auto& a : act) a = a > 0.0 ? a : 0.0;
    const int h = l.height;
    const int w = l.width;
    const int ph = h / 2;
    const int pw = w / 2;
    pooled.assign(static_cast<std::size_t>(l.out) * ph * pw, 0.0);
    auto& arg = t.argmax[s];
    arg.assign(pooled.size(), 0);
    for (int c = 0; c < l.out; ++c) {
      for (int py = 0; py < ph; ++py) {
        for (int px = 0; px < pw; ++px) {
          std::uint32_t best = static_cast<std::uint32_t>((c * h + 2 * py) * w + 2 * px);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const auto cand = static_cast<std::uint32_t>((c * h + 2 * py + dy) * w + 2 * px + dx);
              if (act[cand] > act[best]) best = cand;
            }
          }
          const std::size_t o = (static_cast<std::size_t>(c) * ph + py) * pw + px;
          pooled[o] = act[best];
          arg[o] = best;
        }
      }
    }
  }
  if (stages == 0) {
    pooled.assign(static_cast<std::size_t>(input.channels) * input.height * input.width, 0.0);
    for (std::size_t n = 0; n < input.index.size(); ++n) pooled[input.index[n]] = input.value[n];
  }

  t.dense_in.resize(dense_.size());
  t.dense_pre.resize(dense_.size());
  std::vector<double> current = std::move(pooled);
  for (std::size_t d = 0; d < dense_.size(); ++d) {
    const LayerOffsets& l = dense_[d];
    t.dense_in[d] = current;
    auto& pre = t.dense_pre[d];
    pre.assign(static_cast<std::size_t>(l.out), 0.0);
    for (int o = 0; o < l.out; ++o) {
      const double* row = params_.data() + l.weight + static_cast<std::size_t>(o) * l.in;
      double s = params_[l.bias + o];
      for (int i = 0; i < l.in; ++i) s += row[i] * current[i];
      pre[o] = s;
    }
    current = pre;
    if (d + 1 < dense_.size()) {
      for (auto& v : current) v = v > 0.0 ? v : 0.0;
    }
  }
  t.logits[0] = current[0];
  t.logits[1] = current[1];
}

CnnModel::Output CnnModel::forward(const SparseInput& input) const {
  Trace trace;
  run_forward(input, trace);
  Output out;
  out.logits[0] = trace.logits[0];
  out.logits[1] = trace.logits[1];
  out.probability_forged = softmax_forged(out.logits[0], out.logits[1]);
  return out;
}

CnnModel::Output CnnModel::forward(const FeatureTensor& tensor) const {
  return forward(SparseInput::from_tensor(tensor));
}

double CnnModel::loss_and_gradient(std::span<const SparseInput* const> inputs, std::span<const int> labels,
                                   const double class_weights[2], std::vector<double>& grads) const {
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "batch must be non-empty with one label per input");
  }
  grads.assign(params_.size(), 0.0);
  double weight_sum = 0.0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::ShapeMismatch, "labels must be 0 or 1");
    weight_sum += class_weights[y];
  }
  double loss = 0.0;
  Trace t;
  std::vector<double> d_current;
  std::vector<double> d_prev;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    run_forward(*inputs[n], t);
    const int y = labels[n];
    const double w = class_weights[y] / weight_sum;
    const double z0 = t.logits[0];
    const double z1 = t.logits[1];
    const double zmax = std::max(z0, z1);
    const double lse = zmax + std::log(std::exp(z0 - zmax) + std::exp(z1 - zmax));
    loss += w * (lse - (y == 1 ? z1 : z0));
    const double p1 = softmax_forged(z0, z1);
    d_current = {w * ((1.0 - p1) - (y == 0 ? 1.0 : 0.0)), w * (p1 - (y == 1 ? 1.0 : 0.0))};

    for (std::size_t d = dense_.size(); d-- > 0;) {
      const LayerOffsets& l = dense_[d];
      const auto& in = t.dense_in[d];
      d_prev.assign(static_cast<std::size_t>(l.in), 0.0);
      for (int o = 0; o < l.out; ++o) {
        const double g = d_current[o];
        if (g == 0.0) continue;
        grads[l.bias + o] += g;
        const std::size_t row = l.weight + static_cast<std::size_t>(o) * l.in;
        for (int i = 0; i < l.in; ++i) {
          grads[row + i] += g * in[i];
          d_prev[i] += params_[row + i] * g;
        }
      }
      if (d > 0) {
        const auto& pre = t.dense_pre[d - 1];
        for (int i = 0; i < l.in; ++i) {
          if (pre[i] <= 0.0) d_prev[i] = 0.0;
        }
      }
      std::swap(d_current, d_prev);
    }

    // d_current is now the gradient w.r.t. the last pooled volume.
    for (std::size_t s = conv_.size(); s-- > 0;) {
      const LayerOffsets& l = conv_[s];
      const auto& act = t.activation[s];
      std::vector<double> d_act(act.size(), 0.0);
      const auto& arg = t.argmax[s];
      for (std::size_t o = 0; o < arg.size(); ++o) {
        if (act[arg[o]] > 0.0) d_act[arg[o]] += d_current[o];
      }
      if (s == 0) {
        conv_backward(t.input->index, t.input->value, l, params_.data(), d_act, grads.data(), nullptr);
      } else {
        conv_backward(t.in_index[s], t.in_value[s], l, params_.data(), d_act, grads.data(), &d_prev);
        std::swap(d_current, d_prev);
      }
    }
    if (!std::isfinite(loss)) break;
  }
  return loss;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

void put_floats(std::string& out, const std::vector<double>& values) {
  for (double v : values) put<float>(out, static_cast<float>(v));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw Error(ErrorCode::CorruptCheckpoint, "truncated checkpoint");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<double> floats(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = get<float>();
    return out;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace

std::string CnnModel::serialize(bool include_adam) const {
  std::string out("FBCN");
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arch_.in_channels));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arch_.in_height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arch_.in_width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arch_.conv_channels.size()));
  for (int c : arch_.conv_channels) put<std::uint32_t>(out, static_cast<std::uint32_t>(c));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arch_.dense_units.size()));
  for (int u : arch_.dense_units) put<std::uint32_t>(out, static_cast<std::uint32_t>(u));
  put<std::uint64_t>(out, params_.size());
  put_floats(out, params_);
  const bool adam = include_adam && adam_.m.size() == params_.size();
  put<std::uint8_t>(out, adam ? 1 : 0);
  if (adam) {
    put<std::uint64_t>(out, adam_.step);
    put_floats(out, adam_.m);
    put_floats(out, adam_.v);
  }
  return out;
}

CnnModel CnnModel::deserialize(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "FBCN") != 0) throw Error(ErrorCode::CorruptCheckpoint, "bad magic");
  Reader r(bytes);
  for (int i = 0; i < 4; ++i) r.get<char>();
  if (r.get<std::uint16_t>() != kCheckpointVersion) throw Error(ErrorCode::CorruptCheckpoint, "unsupported version");
  CnnModel model;
  model.arch_.in_channels = static_cast<int>(r.get<std::uint32_t>());
  model.arch_.in_height = static_cast<int>(r.get<std::uint32_t>());
  model.arch_.in_width = static_cast<int>(r.get<std::uint32_t>());
  const auto n_conv = r.get<std::uint32_t>();
  if (n_conv > 64) throw Error(ErrorCode::CorruptCheckpoint, "implausible conv stage count");
  model.arch_.conv_channels.clear();
  for (std::uint32_t i = 0; i < n_conv; ++i) model.arch_.conv_channels.push_back(static_cast<int>(r.get<std::uint32_t>()));
  const auto n_dense = r.get<std::uint32_t>();
  if (n_dense > 64) throw Error(ErrorCode::CorruptCheckpoint, "implausible dense stage count");
  model.arch_.dense_units.clear();
  for (std::uint32_t i = 0; i < n_dense; ++i) model.arch_.dense_units.push_back(static_cast<int>(r.get<std::uint32_t>()));
  try {
    model.layout();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptCheckpoint, e.what());
  }
  const auto count = r.get<std::uint64_t>();
  if (count != model.params_.size()) throw Error(ErrorCode::CorruptCheckpoint, "parameter count does not match arch");
  model.params_ = r.floats(count);
  if (r.get<std::uint8_t>() != 0) {
    model.adam_.step = r.get<std::uint64_t>();
    model.adam_.m = r.floats(count);
    model.adam_.v = r.floats(count);
  }
  if (!r.done()) throw Error(ErrorCode::CorruptCheckpoint, "trailing bytes");
  return model;
}

void CnnModel::save(const std::filesystem::path& path, bool include_adam) const {
  write_file_atomic(path, serialize(include_adam));
}

CnnModel CnnModel::load(const std::filesystem::path& path) { return deserialize(read_file_text(path)); }

}  // namespace forgebench

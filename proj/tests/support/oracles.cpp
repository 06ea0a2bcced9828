#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>
#include <jpeglib.h>

#include "forgebench/util.hpp"

namespace oracle {

namespace {

struct ErrorJump {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void on_error(j_common_ptr info) { std::longjmp(reinterpret_cast<ErrorJump*>(info->err)->jump, 1); }

bool read_coefficients(std::span<const std::uint8_t> jpeg, LibjpegPlane& out) {
  jpeg_decompress_struct cinfo{};
  ErrorJump err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_error;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, jpeg.data(), static_cast<unsigned long>(jpeg.size()));
  jpeg_read_header(&cinfo, TRUE);
  jvirt_barray_ptr* arrays = jpeg_read_coefficients(&cinfo);
  jpeg_component_info* comp = &cinfo.comp_info[0];
  out.blocks_wide = static_cast<int>(comp->width_in_blocks);
  out.blocks_high = static_cast<int>(comp->height_in_blocks);
  for (int k = 0; k < DCTSIZE2; ++k) out.quant_table[k] = comp->quant_table->quantval[k];
  out.blocks.resize(static_cast<std::size_t>(out.blocks_wide) * out.blocks_high);
  for (int by = 0; by < out.blocks_high; ++by) {
    JBLOCKARRAY row = (*cinfo.mem->access_virt_barray)(reinterpret_cast<j_common_ptr>(&cinfo), arrays[0],
                                                        static_cast<JDIMENSION>(by), 1, FALSE);
    for (int bx = 0; bx < out.blocks_wide; ++bx) {
      auto& dst = out.blocks[static_cast<std::size_t>(by) * out.blocks_wide + bx];
      for (int k = 0; k < DCTSIZE2; ++k) dst[k] = row[0][bx][k];
    }
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

}  // namespace

LibjpegPlane libjpeg_coefficients(std::span<const std::uint8_t> jpeg) {
  LibjpegPlane out;
  if (!read_coefficients(jpeg, out)) throw std::runtime_error("libjpeg rejected the stream");
  return out;
}

forgebench::Block8x8 dct_direct(const forgebench::Block8x8& f) {
  forgebench::Block8x8 out{};
  const double pi = std::numbers::pi;
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      const double cv = v == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      double sum = 0.0;
      for (int x = 0; x < 8; ++x) {
        for (int y = 0; y < 8; ++y) {
          sum += f[x * 8 + y] * std::cos((2 * x + 1) * u * pi / 16.0) * std::cos((2 * y + 1) * v * pi / 16.0);
        }
      }
      out[u * 8 + v] = cu * cv * sum;
    }
  }
  return out;
}

double pair_count_auc(const std::vector<forgebench::ScoredSample>& samples) {
  long long half_credits = 0;
  long long pairs = 0;
  for (const auto& f : samples) {
    if (f.truth != forgebench::Label::Forged) continue;
    for (const auto& p : samples) {
      if (p.truth != forgebench::Label::Pristine) continue;
      ++pairs;
      if (f.score > p.score) half_credits += 2;
      else if (f.score == p.score) half_credits += 1;
    }
  }
  return static_cast<double>(half_credits) / (2.0 * static_cast<double>(pairs));
}

double bilinear_at(const forgebench::Image& image, int out_w, int out_h, int ox, int oy, int channel) {
  auto source = [](int o, int in, int out) {
    double s = (o + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  const double sx = source(ox, image.width, out_w);
  const double sy = source(oy, image.height, out_h);
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double fx = sx - x0;
  const double fy = sy - y0;
  const double top = image.at(x0, y0, channel) * (1 - fx) + image.at(x1, y0, channel) * fx;
  const double bottom = image.at(x0, y1, channel) * (1 - fx) + image.at(x1, y1, channel) * fx;
  return top * (1 - fy) + bottom * fy;
}

double central_difference(const std::function<double()>& f, double& param, double h) {
  const double saved = param;
  param = saved + h;
  const double up = f();
  param = saved - h;
  const double down = f();
  param = saved;
  return (up - down) / (2 * h);
}

forgebench::Image textured_image(int width, int height, std::uint64_t seed, int channels) {
  std::mt19937_64 rng(seed);
  forgebench::Image image(width, height, channels);
  const double fx = 0.02 + 0.2 * forgebench::uniform_unit(rng);
  const double fy = 0.02 + 0.2 * forgebench::uniform_unit(rng);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const double v = 128 + 60 * std::sin(fx * x + c) * std::cos(fy * y) + 25 * forgebench::standard_normal(rng) +
                         (((x / 16) + (y / 16)) % 2 ? 20 : -20);
        image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return image;
}

std::vector<forgebench::Bytes> reference_jpegs(std::size_t count, std::uint64_t seed) {
  static const int kSizes[][2] = {{8, 8}, {16, 16}, {37, 29}, {64, 48}, {129, 131}, {200, 75}, {256, 256}, {17, 250}};
  static const int kQualities[] = {10, 35, 50, 75, 90, 95, 100};
  std::vector<forgebench::Bytes> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& size = kSizes[i % std::size(kSizes)];
    const int channels = i % 5 == 3 ? 1 : 3;
    const auto image = textured_image(size[0], size[1], seed + i, channels);
    forgebench::JpegEncodeOptions options;
    options.quality = kQualities[i % std::size(kQualities)];
    options.subsample_chroma = i % 2 == 0;
    options.optimize_huffman = i % 3 == 1;
    options.restart_interval = i % 4 == 2 ? 1 + static_cast<int>(i % 3) : 0;
    out.push_back(forgebench::encode_jpeg(image, options));
  }
  return out;
}

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path_ = std::filesystem::temp_directory_path() /
          ("forgebench-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path fixture_dir() { return FORGEBENCH_FIXTURE_DIR; }

}  // namespace oracle

namespace oracle {

GradientCheck cnn_gradient_check(const forgebench::CnnArch& arch, std::uint64_t seed, double step, double floor) {
  forgebench::CnnModel model(arch, seed);
  std::mt19937_64 rng(seed * 7919 + 1);
  std::vector<forgebench::SparseInput> inputs;
  std::vector<int> labels;
  const std::size_t dense_size = static_cast<std::size_t>(arch.in_channels) * arch.in_height * arch.in_width;
  for (int i = 0; i < 4; ++i) {
    std::vector<float> dense(dense_size);
    for (auto& v : dense) v = forgebench::uniform_unit(rng) < 0.3 ? 0.0f : static_cast<float>(forgebench::standard_normal(rng));
    inputs.push_back(forgebench::SparseInput::from_dense(dense, arch.in_channels, arch.in_height, arch.in_width));
    labels.push_back(i % 2);
  }
  std::vector<const forgebench::SparseInput*> ptrs;
  for (const auto& in : inputs) ptrs.push_back(&in);
  const double weights[2] = {1.0, 2.5};

  std::vector<double> grads;
  model.loss_and_gradient(ptrs, labels, weights, grads);
  std::vector<double> scratch;
  auto loss = [&] { return model.loss_and_gradient(ptrs, labels, weights, scratch); };

  GradientCheck out;
  auto params = model.parameters();
  out.parameters = params.size();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double numeric = central_difference(loss, params[i], step);
    const double denom = std::max({std::abs(grads[i]), std::abs(numeric), floor});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(grads[i] - numeric) / denom);
  }
  return out;
}

}  // namespace oracle

namespace oracle {

std::vector<forgebench::ScoredSample> ladder_scores(int forged, int pristine, int concordant) {
  if (concordant < 0 || concordant > forged * pristine) throw std::invalid_argument("concordant out of range");
  const double rung = 1.0 / (pristine + 2);
  std::vector<forgebench::ScoredSample> out;
  for (int j = 0; j < pristine; ++j) {
    out.push_back({fmt::format("p{:03}", j), (j + 1) * rung, forgebench::Label::Pristine});
  }
  for (int i = 0; i < forged; ++i) {
    // forged i beats `beats` pristine documents; the sum over i is `concordant`
    const int beats = concordant / forged + (i < concordant % forged ? 1 : 0);
    out.push_back({fmt::format("f{:03}", i), (beats + 0.5) * rung, forgebench::Label::Forged});
  }
  return out;
}

forgebench::EvalRun ladder_run(const std::string& model_id, std::map<std::string, std::string> config, int forged,
                               int pristine, int concordant) {
  std::vector<forgebench::Prediction> preds;
  for (const auto& s : ladder_scores(forged, pristine, concordant)) {
    forgebench::Prediction p;
    p.model_id = model_id;
    p.document_id = s.id;
    p.truth = s.truth;
    p.score = s.score;
    p.parse_path = forgebench::ParsePath::Direct;
    p.raw_response_digest = forgebench::sha256_hex(std::string_view(fmt::format("{}", s.score)));
    p.timestamp = "2025-01-01T00:00:00Z";
    preds.push_back(std::move(p));
  }
  return forgebench::make_run(model_id, std::move(config), std::move(preds), forgebench::kDefaultThreshold, "");
}

}  // namespace oracle

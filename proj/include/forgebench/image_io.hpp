#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forgebench/util.hpp"

namespace forgebench {

/// Interleaved 8-bit raster, 1 (gray) or 3 (RGB) channels, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c) {}

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

enum class MediaType { Jpeg, Png, Unknown };

MediaType sniff_media_type(std::span<const std::uint8_t> bytes);

/// Decodes JPEG (any libjpeg-supported mode) or PNG. Any decoder warning,
/// such as a truncated entropy segment, is treated as corruption and throws
/// UndecodableImage.
Image decode_image(std::span<const std::uint8_t> bytes);

struct JpegEncodeOptions {
  int quality = 90;
  bool progressive = false;
  bool optimize_huffman = false;
  int restart_interval = 0;  // in MCUs; 0 disables
  bool subsample_chroma = true;  // 4:2:0 when true, 4:4:4 otherwise
};

/// Baseline (or progressive when requested) JPEG encode via libjpeg.
Bytes encode_jpeg(const Image& image, const JpegEncodeOptions& options = {});

}  // namespace forgebench

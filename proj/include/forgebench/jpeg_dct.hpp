#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace forgebench {

/// One 8x8 block of quantized coefficients in natural (row-major u,v) order,
/// index u*8 + v where u is the vertical frequency.
using DctBlock = std::array<std::int32_t, 64>;

/// Quantization divisors in natural order.
using QuantTable = std::array<std::uint16_t, 64>;

/// Zigzag scan position -> natural index.
extern const std::array<int, 64> kZigzagToNatural;

/// Quantized luminance DCT coefficients of one JPEG image, read straight from
/// the entropy-coded stream (DC prediction already resolved, no
/// dequantization).
struct DctPlane {
  int width = 0;   // image pixels
  int height = 0;
  int blocks_wide = 0;  // ceil(width / 8)
  int blocks_high = 0;  // ceil(height / 8)
  std::vector<DctBlock> blocks;  // row-major over the block grid
  QuantTable quant_table{};

  const DctBlock& block(int bx, int by) const {
    return blocks[static_cast<std::size_t>(by) * blocks_wide + bx];
  }
  DctBlock& block(int bx, int by) { return blocks[static_cast<std::size_t>(by) * blocks_wide + bx]; }
};

/// Baseline/extended-sequential Huffman JPEG coefficient reader. Handles
/// interleaved and non-interleaved scans, any sampling factors, restart
/// intervals, and multiple DQT/DHT segments. Only the first frame component
/// (luminance for JFIF) is kept.
///
/// Throws NotAJpeg when the SOI marker is missing, ProgressiveUnsupported for
/// progressive, lossless and arithmetic-coded frames, and CorruptStream (with
/// the byte offset in the message) for anything malformed or truncated.
DctPlane decode_jpeg_dct(std::span<const std::uint8_t> bytes);

struct DctLoadResult {
  DctPlane plane;
  bool reencoded = false;  // true when the quality-90 baseline fallback ran
  std::string fallback_reason;
};

inline constexpr int kFallbackQuality = 90;

/// decode_jpeg_dct with the provenance-losing fallback: progressive JPEGs and
/// non-JPEG rasters are decoded to pixels, re-encoded as baseline JPEG at
/// quality 90, and read from that stream. Corrupt JPEG streams still throw.
DctLoadResult load_dct_plane(std::span<const std::uint8_t> bytes);

using Block8x8 = std::array<double, 64>;

/// Orthonormal 2-D DCT-II of a level-shifted 8x8 block (row-major x,y in,
/// natural u,v out).
Block8x8 dct2d_reference(const Block8x8& pixels);

/// Inverse of dct2d_reference (orthonormal DCT-III).
Block8x8 idct2d_reference(const Block8x8& coefficients);

}  // namespace forgebench

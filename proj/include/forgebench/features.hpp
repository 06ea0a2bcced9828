#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forgebench/jpeg_dct.hpp"

namespace forgebench {

inline constexpr int kPatchPixels = 128;
inline constexpr int kPatchBlocks = kPatchPixels / 8;  // 16
inline constexpr int kDctModes = 64;
inline constexpr int kDefaultClampT = 10;

struct PixelRect {
  int x = 0;
  int y = 0;
  int width = kPatchPixels;
  int height = kPatchPixels;

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Coefficient blocks under one 128x128 patch.
struct PatchBlocks {
  PixelRect rect;
  std::vector<DctBlock> blocks;  // 16x16, row-major
};

/// Non-overlapping 128-stride tiling that fits inside the pixel extent.
std::vector<PixelRect> tile_patch_rects(const DctPlane& plane);

/// Cuts the requested 8-aligned 128x128 rects out of the plane. Throws
/// PlaneTooSmall for planes under 128x128 and ShapeMismatch for rects that are
/// misaligned or leave the image.
std::vector<PatchBlocks> partition_patches(const DctPlane& plane, const std::vector<PixelRect>& rects);

/// Convenience overload using tile_patch_rects.
std::vector<PatchBlocks> partition_patches(const DctPlane& plane);

/// One-hot DCT volume of shape (64 * (2T+1), 16, 16). Channel index for mode
/// m and value bucket b is m * (2T+1) + b, b = clamp(c, -T, T) + T.
struct FeatureTensor {
  int clamp_t = kDefaultClampT;
  bool pql_applied = false;
  std::vector<float> values;

  int channels() const { return kDctModes * (2 * clamp_t + 1); }
  static std::size_t size_for(int clamp_t) {
    return static_cast<std::size_t>(kDctModes) * (2 * clamp_t + 1) * kPatchBlocks * kPatchBlocks;
  }
  float at(int channel, int row, int col) const {
    return values[(static_cast<std::size_t>(channel) * kPatchBlocks + row) * kPatchBlocks + col];
  }
};

FeatureTensor one_hot_encode(const std::vector<DctBlock>& patch_blocks, int clamp_t = kDefaultClampT);

/// Scales every channel of DCT mode m by quant_table[m]. Throws AlreadyApplied
/// on a tensor that has been through PQL.
FeatureTensor apply_pql(const FeatureTensor& tensor, const QuantTable& quant_table);

/// one_hot_encode followed by apply_pql when `pql` is set.
FeatureTensor encode_patch(const PatchBlocks& patch, const QuantTable& quant_table, int clamp_t, bool pql);

enum class PatchLabel : std::uint8_t { Pristine = 0, Forged = 1 };

struct CachedPatch {
  PixelRect rect;
  PatchLabel label = PatchLabel::Pristine;
  FeatureTensor tensor;
};

/// Per-image feature cache.
///
/// Layout (all little-endian):
///   char[4]  magic "OHJF"
///   u16      version (1)
///   u32      image width, u32 image height
///   u16      clamp threshold T
///   u8       PQL flag, u8 reserved (0)
///   u32      patch count
///   per patch, sorted by (y, x):
///     u32 x, u32 y, u8 label (0 pristine, 1 forged), u8[3] reserved
///     f32[64*(2T+1)*16*16] channel-major values
struct FeatureCache {
  int width = 0;
  int height = 0;
  int clamp_t = kDefaultClampT;
  bool pql = false;
  std::vector<CachedPatch> patches;
};

inline constexpr std::uint16_t kFeatureCacheVersion = 1;

std::string serialize_feature_cache(FeatureCache cache);
FeatureCache parse_feature_cache(const std::string& bytes);
void write_feature_cache(const std::filesystem::path& path, const FeatureCache& cache);
FeatureCache read_feature_cache(const std::filesystem::path& path);

}  // namespace forgebench

#include "forgebench/features.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <tuple>

#include "forgebench/error.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

std::vector<PixelRect> tile_patch_rects(const DctPlane& plane) {
  if (plane.width < kPatchPixels || plane.height < kPatchPixels) {
    throw Error(ErrorCode::PlaneTooSmall, std::to_string(plane.width) + "x" + std::to_string(plane.height));
  }
  std::vector<PixelRect> rects;
  for (int y = 0; y + kPatchPixels <= plane.height; y += kPatchPixels) {
    for (int x = 0; x + kPatchPixels <= plane.width; x += kPatchPixels) rects.push_back({x, y});
  }
  return rects;
}

std::vector<PatchBlocks> partition_patches(const DctPlane& plane, const std::vector<PixelRect>& rects) {
  if (plane.width < kPatchPixels || plane.height < kPatchPixels) {
    throw Error(ErrorCode::PlaneTooSmall, std::to_string(plane.width) + "x" + std::to_string(plane.height));
  }
  std::vector<PatchBlocks> out;
  out.reserve(rects.size());
  for (const auto& rect : rects) {
    if (rect.width != kPatchPixels || rect.height != kPatchPixels || rect.x % 8 != 0 || rect.y % 8 != 0 ||
        rect.x < 0 || rect.y < 0 || rect.x + kPatchPixels > plane.width || rect.y + kPatchPixels > plane.height) {
      throw Error(ErrorCode::ShapeMismatch, "patch rect must be 8-aligned 128x128 inside the image");
    }
    PatchBlocks patch;
    patch.rect = rect;
    patch.blocks.reserve(kPatchBlocks * kPatchBlocks);
    const int bx0 = rect.x / 8;
    const int by0 = rect.y / 8;
    for (int by = 0; by < kPatchBlocks; ++by) {
      for (int bx = 0; bx < kPatchBlocks; ++bx) patch.blocks.push_back(plane.block(bx0 + bx, by0 + by));
    }
    out.push_back(std::move(patch));
  }
  return out;
}

std::vector<PatchBlocks> partition_patches(const DctPlane& plane) {
  return partition_patches(plane, tile_patch_rects(plane));
}

FeatureTensor one_hot_encode(const std::vector<DctBlock>& patch_blocks, int clamp_t) {
  if (clamp_t < 1) throw Error(ErrorCode::ConfigError, "clamp threshold T must be >= 1");
  if (patch_blocks.size() != static_cast<std::size_t>(kPatchBlocks * kPatchBlocks)) {
    throw Error(ErrorCode::ShapeMismatch, "expected a 16x16 block sub-grid");
  }
  FeatureTensor tensor;
  tensor.clamp_t = clamp_t;
  tensor.values.assign(FeatureTensor::size_for(clamp_t), 0.0f);
  const int buckets = 2 * clamp_t + 1;
  constexpr std::size_t plane_size = kPatchBlocks * kPatchBlocks;
  for (std::size_t cell = 0; cell < plane_size; ++cell) {
    const DctBlock& block = patch_blocks[cell];
    for (int mode = 0; mode < kDctModes; ++mode) {
      const int bucket = std::clamp(block[mode], -clamp_t, clamp_t) + clamp_t;
      const std::size_t channel = static_cast<std::size_t>(mode) * buckets + bucket;
      tensor.values[channel * plane_size + cell] = 1.0f;
    }
  }
  return tensor;
}

FeatureTensor apply_pql(const FeatureTensor& tensor, const QuantTable& quant_table) {
  if (tensor.pql_applied) throw Error(ErrorCode::AlreadyApplied, "PQL already applied to this tensor");
  FeatureTensor out = tensor;
  out.pql_applied = true;
  const int buckets = 2 * tensor.clamp_t + 1;
  constexpr std::size_t plane_size = kPatchBlocks * kPatchBlocks;
  for (int mode = 0; mode < kDctModes; ++mode) {
    const float q = static_cast<float>(quant_table[mode]);
    const auto begin = static_cast<std::size_t>(mode) * buckets * plane_size;
    const auto end = begin + buckets * plane_size;
    for (std::size_t i = begin; i < end; ++i) out.values[i] *= q;
  }
  return out;
}

FeatureTensor encode_patch(const PatchBlocks& patch, const QuantTable& quant_table, int clamp_t, bool pql) {
  FeatureTensor tensor = one_hot_encode(patch.blocks, clamp_t);
  return pql ? apply_pql(tensor, quant_table) : tensor;
}

namespace {

static_assert(std::endian::native == std::endian::little, "feature cache I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(const std::string& data) : data_(data) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw Error(ErrorCode::CorruptFeatureCache, "truncated at byte " + std::to_string(pos_));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void read(void* dst, std::size_t n) {
    if (pos_ + n > data_.size()) throw Error(ErrorCode::CorruptFeatureCache, "truncated at byte " + std::to_string(pos_));
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_feature_cache(FeatureCache cache) {
  std::sort(cache.patches.begin(), cache.patches.end(), [](const CachedPatch& a, const CachedPatch& b) {
    return std::tie(a.rect.y, a.rect.x) < std::tie(b.rect.y, b.rect.x);
  });
  const std::size_t per_patch = FeatureTensor::size_for(cache.clamp_t);
  std::string out;
  out.reserve(24 + cache.patches.size() * (12 + per_patch * 4));
  out.append("OHJF", 4);
  put<std::uint16_t>(out, kFeatureCacheVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cache.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cache.height));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(cache.clamp_t));
  put<std::uint8_t>(out, cache.pql ? 1 : 0);
  put<std::uint8_t>(out, 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cache.patches.size()));
  for (const auto& patch : cache.patches) {
    if (patch.tensor.clamp_t != cache.clamp_t || patch.tensor.pql_applied != cache.pql ||
        patch.tensor.values.size() != per_patch) {
      throw Error(ErrorCode::ShapeMismatch, "patch tensor does not match cache header");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(patch.rect.x));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(patch.rect.y));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(patch.label));
    out.append(3, '\0');
    out.append(reinterpret_cast<const char*>(patch.tensor.values.data()), per_patch * sizeof(float));
  }
  return out;
}

FeatureCache parse_feature_cache(const std::string& bytes) {
  Cursor cur(bytes);
  char magic[4];
  cur.read(magic, 4);
  if (std::memcmp(magic, "OHJF", 4) != 0) throw Error(ErrorCode::CorruptFeatureCache, "bad magic");
  if (cur.get<std::uint16_t>() != kFeatureCacheVersion) throw Error(ErrorCode::CorruptFeatureCache, "unsupported version");
  FeatureCache cache;
  cache.width = static_cast<int>(cur.get<std::uint32_t>());
  cache.height = static_cast<int>(cur.get<std::uint32_t>());
  cache.clamp_t = cur.get<std::uint16_t>();
  cache.pql = cur.get<std::uint8_t>() != 0;
  cur.get<std::uint8_t>();
  if (cache.clamp_t < 1) throw Error(ErrorCode::CorruptFeatureCache, "clamp threshold must be >= 1");
  const auto count = cur.get<std::uint32_t>();
  const std::size_t per_patch = FeatureTensor::size_for(cache.clamp_t);
  for (std::uint32_t i = 0; i < count; ++i) {
    CachedPatch patch;
    patch.rect.x = static_cast<int>(cur.get<std::uint32_t>());
    patch.rect.y = static_cast<int>(cur.get<std::uint32_t>());
    const auto label = cur.get<std::uint8_t>();
    if (label > 1) throw Error(ErrorCode::CorruptFeatureCache, "bad patch label");
    patch.label = static_cast<PatchLabel>(label);
    char reserved[3];
    cur.read(reserved, 3);
    patch.tensor.clamp_t = cache.clamp_t;
    patch.tensor.pql_applied = cache.pql;
    patch.tensor.values.resize(per_patch);
    cur.read(patch.tensor.values.data(), per_patch * sizeof(float));
    cache.patches.push_back(std::move(patch));
  }
  if (!cur.done()) throw Error(ErrorCode::CorruptFeatureCache, "trailing bytes");
  return cache;
}

void write_feature_cache(const std::filesystem::path& path, const FeatureCache& cache) {
  write_file_atomic(path, serialize_feature_cache(cache));
}

FeatureCache read_feature_cache(const std::filesystem::path& path) {
  return parse_feature_cache(read_file_text(path));
}

}  // namespace forgebench

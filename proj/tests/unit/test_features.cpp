#include <doctest.h>

#include <random>

#include "forgebench/error.hpp"
#include "forgebench/features.hpp"
#include "forgebench/image_io.hpp"
#include "forgebench/util.hpp"
#include "oracles.hpp"

using namespace forgebench;

namespace {

DctPlane synthetic_plane(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DctPlane plane;
  plane.width = width;
  plane.height = height;
  plane.blocks_wide = (width + 7) / 8;
  plane.blocks_high = (height + 7) / 8;
  plane.blocks.resize(static_cast<std::size_t>(plane.blocks_wide) * plane.blocks_high);
  for (auto& b : plane.blocks) {
    for (auto& c : b) c = static_cast<std::int32_t>(uniform_index(rng, 41)) - 20;
  }
  for (int k = 0; k < 64; ++k) plane.quant_table[k] = static_cast<std::uint16_t>(1 + k);
  return plane;
}

}  // namespace

TEST_CASE("tiling fits inside the image") {
  const auto plane = synthetic_plane(300, 260, 1);
  const auto rects = tile_patch_rects(plane);
  CHECK(rects.size() == 4);
  for (const auto& r : rects) {
    CHECK(r.x + r.width <= 300);
    CHECK(r.y + r.height <= 260);
    CHECK(r.x % 8 == 0);
  }
  CHECK_THROWS_AS(tile_patch_rects(synthetic_plane(127, 400, 1)), Error);
}

TEST_CASE("partition copies the right blocks") {
  const auto plane = synthetic_plane(256, 256, 2);
  const auto patches = partition_patches(plane, {{64, 8, 128, 128}});
  REQUIRE(patches.size() == 1);
  REQUIRE(patches[0].blocks.size() == 256);
  CHECK(patches[0].blocks[0] == plane.block(8, 1));
  CHECK(patches[0].blocks[255] == plane.block(8 + 15, 1 + 15));
  CHECK_THROWS_AS(partition_patches(plane, {{4, 0, 128, 128}}), Error);
  CHECK_THROWS_AS(partition_patches(plane, {{136, 0, 128, 128}}), Error);
  CHECK_THROWS_AS(partition_patches(synthetic_plane(120, 300, 3)), Error);
}

TEST_CASE("one-hot encoding places exactly one hot bucket per mode and cell") {
  const auto plane = synthetic_plane(128, 128, 4);
  const auto patch = partition_patches(plane)[0];
  for (int t : {1, 3, 10}) {
    const auto tensor = one_hot_encode(patch.blocks, t);
    REQUIRE(tensor.values.size() == FeatureTensor::size_for(t));
    CHECK(tensor.channels() == 64 * (2 * t + 1));
    for (int row = 0; row < 16; row += 5) {
      for (int col = 0; col < 16; col += 3) {
        const auto& block = patch.blocks[static_cast<std::size_t>(row) * 16 + col];
        for (int m = 0; m < 64; ++m) {
          const int bucket = std::clamp(block[m], -t, t) + t;
          float sum = 0;
          for (int b = 0; b < 2 * t + 1; ++b) sum += tensor.at(m * (2 * t + 1) + b, row, col);
          CHECK(sum == 1.0f);
          CHECK(tensor.at(m * (2 * t + 1) + bucket, row, col) == 1.0f);
        }
      }
    }
  }
}

TEST_CASE("pql scales each mode and refuses a second pass") {
  const auto plane = synthetic_plane(128, 128, 5);
  const auto patch = partition_patches(plane)[0];
  const auto tensor = one_hot_encode(patch.blocks, 2);
  const auto scaled = apply_pql(tensor, plane.quant_table);
  CHECK(scaled.pql_applied);
  for (int m = 0; m < 64; m += 7) {
    for (int b = 0; b < 5; ++b) {
      CHECK(scaled.at(m * 5 + b, 3, 4) == tensor.at(m * 5 + b, 3, 4) * plane.quant_table[m]);
    }
  }
  CHECK_THROWS_AS(apply_pql(scaled, plane.quant_table), Error);
  const auto via_encode = encode_patch(patch, plane.quant_table, 2, true);
  CHECK(via_encode.values == scaled.values);
}

TEST_CASE("feature cache round trip and corruption") {
  const auto plane = synthetic_plane(256, 128, 6);
  FeatureCache cache;
  cache.width = 256;
  cache.height = 128;
  cache.clamp_t = 2;
  cache.pql = true;
  for (const auto& p : partition_patches(plane)) {
    cache.patches.push_back({p.rect, p.rect.x == 0 ? PatchLabel::Forged : PatchLabel::Pristine,
                             encode_patch(p, plane.quant_table, 2, true)});
  }
  const auto bytes = serialize_feature_cache(cache);
  const auto back = parse_feature_cache(bytes);
  CHECK(back.width == 256);
  CHECK(back.clamp_t == 2);
  CHECK(back.pql);
  REQUIRE(back.patches.size() == 2);
  CHECK(back.patches[0].label == PatchLabel::Forged);
  CHECK(back.patches[1].tensor.values == cache.patches[1].tensor.values);
  CHECK(serialize_feature_cache(back) == bytes);

  CHECK_THROWS_AS(parse_feature_cache(bytes.substr(0, bytes.size() - 3)), Error);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_feature_cache(bad_magic), Error);

  oracle::TempDir dir("features");
  write_feature_cache(dir.path() / "a.ohjf", cache);
  CHECK(serialize_feature_cache(read_feature_cache(dir.path() / "a.ohjf")) == bytes);
}

TEST_CASE("features from a real JPEG carry its quant table") {
  const auto jpeg = encode_jpeg(oracle::textured_image(128, 128, 8), {.quality = 50});
  const auto plane = decode_jpeg_dct(jpeg);
  const auto t = encode_patch(partition_patches(plane)[0], plane.quant_table, 10, true);
  float max_value = 0;
  for (float v : t.values) max_value = std::max(max_value, v);
  const auto q_max = *std::max_element(plane.quant_table.begin(), plane.quant_table.end());
  CHECK(max_value <= q_max);
  CHECK(max_value > 1.0f);
}

#include <doctest.h>

#include <random>

#include "forgebench/error.hpp"
#include "forgebench/image_io.hpp"
#include "forgebench/jpeg_dct.hpp"
#include "forgebench/util.hpp"
#include "oracles.hpp"

using namespace forgebench;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("zigzag table is a permutation ending at 63") {
  std::array<bool, 64> seen{};
  for (int n : kZigzagToNatural) seen[static_cast<std::size_t>(n)] = true;
  for (bool s : seen) CHECK(s);
  CHECK(kZigzagToNatural[0] == 0);
  CHECK(kZigzagToNatural[1] == 1);
  CHECK(kZigzagToNatural[2] == 8);
  CHECK(kZigzagToNatural[63] == 63);
}

TEST_CASE("coefficients match libjpeg across encoder settings") {
  const auto jpegs = oracle::reference_jpegs(24, 100);
  for (std::size_t i = 0; i < jpegs.size(); ++i) {
    CAPTURE(i);
    const auto mine = decode_jpeg_dct(jpegs[i]);
    const auto ref = oracle::libjpeg_coefficients(jpegs[i]);
    CHECK(mine.blocks_wide == ref.blocks_wide);
    CHECK(mine.blocks_high == ref.blocks_high);
    CHECK(mine.quant_table == ref.quant_table);
    CHECK(mine.blocks == ref.blocks);
  }
}

TEST_CASE("dct matches the direct sum and inverts") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    Block8x8 block{};
    for (auto& v : block) v = uniform_unit(rng) * 255.0 - 128.0;
    const auto fast = dct2d_reference(block);
    const auto direct = oracle::dct_direct(block);
    const auto back = idct2d_reference(fast);
    for (int k = 0; k < 64; ++k) {
      CHECK(std::abs(fast[k] - direct[k]) < 1e-9);
      CHECK(std::abs(back[k] - block[k]) < 1e-9);
    }
  }
}

TEST_CASE("constant block has only a DC term") {
  Block8x8 block;
  block.fill(10.0);
  const auto c = dct2d_reference(block);
  CHECK(c[0] == doctest::Approx(80.0));
  for (int k = 1; k < 64; ++k) CHECK(std::abs(c[k]) < 1e-12);
}

TEST_CASE("stream errors") {
  const Bytes garbage{1, 2, 3, 4};
  CHECK(code_of([&] { decode_jpeg_dct(garbage); }) == ErrorCode::NotAJpeg);

  JpegEncodeOptions progressive;
  progressive.progressive = true;
  const auto prog = encode_jpeg(oracle::textured_image(64, 64, 1), progressive);
  CHECK(code_of([&] { decode_jpeg_dct(prog); }) == ErrorCode::ProgressiveUnsupported);

  auto truncated = encode_jpeg(oracle::textured_image(64, 64, 2));
  truncated.resize(truncated.size() / 2);
  const auto code = code_of([&] { decode_jpeg_dct(truncated); });
  CHECK(code == ErrorCode::CorruptStream);
}

TEST_CASE("fallback re-encodes progressive input") {
  JpegEncodeOptions progressive;
  progressive.progressive = true;
  const auto prog = encode_jpeg(oracle::textured_image(64, 48, 3), progressive);
  const auto loaded = load_dct_plane(prog);
  CHECK(loaded.reencoded);
  CHECK_FALSE(loaded.fallback_reason.empty());
  CHECK(loaded.plane.width == 64);
  CHECK(loaded.plane.height == 48);

  const auto baseline = encode_jpeg(oracle::textured_image(64, 48, 3));
  const auto direct = load_dct_plane(baseline);
  CHECK_FALSE(direct.reencoded);
  CHECK(direct.plane.blocks == decode_jpeg_dct(baseline).blocks);

  auto truncated = baseline;
  truncated.resize(40);
  CHECK_THROWS_AS(load_dct_plane(truncated), Error);
}

TEST_CASE("image codec round trip") {
  const auto image = oracle::textured_image(40, 24, 4);
  const auto bytes = encode_jpeg(image, {.quality = 100, .subsample_chroma = false});
  CHECK(sniff_media_type(bytes) == MediaType::Jpeg);
  const auto back = decode_image(bytes);
  CHECK(back.width == 40);
  CHECK(back.height == 24);
  CHECK(back.channels == 3);
  double err = 0;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) err += std::abs(image.pixels[i] - back.pixels[i]);
  CHECK(err / static_cast<double>(image.pixels.size()) < 6.0);
  CHECK_THROWS_AS(decode_image(Bytes{0xFF, 0xD8, 0xFF}), Error);
}

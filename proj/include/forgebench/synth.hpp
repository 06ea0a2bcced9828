#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forgebench/dataset.hpp"
#include "forgebench/image_io.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

struct SynthOptions {
  int pristine = 6;
  int forged = 6;
  int width = 384;
  int height = 384;
  int base_quality = 90;   // final save of every image
  int paste_quality = 60;  // extra compression applied to the pasted region first
  int region_min = 136;    // region side bounds, rounded down to multiples of 8
  int region_max = 192;
  double noise_sigma = 6.0;  // sensor-like noise on the receipt background
  int test_every = 2;        // every n-th document of each class goes to the test split
  std::uint64_t seed = 0;
};

struct SynthDocument {
  std::string id;
  Label label = Label::Pristine;
  Split split = Split::Train;
  std::optional<ForgedRegion> region;
  Bytes jpeg;
};

/// Receipt-like RGB page: noisy paper, a header band and rows of glyph blocks.
Image render_receipt(int width, int height, std::uint64_t seed, double noise_sigma = 6.0);

/// Pastes `donor` pixels over `region` of `base` after compressing them on
/// their own at `paste_quality`. The region must be 8-aligned so the pasted
/// blocks stay on the final JPEG grid.
Image paste_recompressed(const Image& base, const Image& donor, const ForgedRegion& region, int paste_quality);

/// Deterministic corpus: ids syn0001.., pristine first then forged. Forged
/// regions leave room for at least one 128x128 window outside them.
std::vector<SynthDocument> generate_corpus(const SynthOptions& options);

/// Writes <root>/images/<id>.jpg, <root>/labels.txt and
/// <root>/splits/{train,test}.txt.
void write_corpus(const std::filesystem::path& root, const std::vector<SynthDocument>& documents);

}  // namespace forgebench

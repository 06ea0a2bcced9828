#include "forgebench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "forgebench/error.hpp"

namespace forgebench {

namespace {

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void fill_rect(Image& image, int x0, int y0, int w, int h, const double rgb[3]) {
  for (int y = std::max(0, y0); y < std::min(image.height, y0 + h); ++y) {
    for (int x = std::max(0, x0); x < std::min(image.width, x0 + w); ++x) {
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = clamp_byte(rgb[c]);
    }
  }
}

int align_down(int v) { return v - v % 8; }

}  // namespace

Image render_receipt(int width, int height, std::uint64_t seed, double noise_sigma) {
  std::mt19937_64 rng(seed);
  Image image(width, height, 3);
  const double tint[3] = {246.0 + 6 * uniform_unit(rng), 242.0 + 6 * uniform_unit(rng), 232.0 + 6 * uniform_unit(rng)};
  for (int y = 0; y < height; ++y) {
    // Slow vertical shading, as from uneven lighting.
    const double shade = 6.0 * std::sin(static_cast<double>(y) / height * 3.0 + static_cast<double>(seed % 7));
    for (int x = 0; x < width; ++x) {
      const double n = noise_sigma * standard_normal(rng);
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = clamp_byte(tint[c] + shade + n);
    }
  }

  const double band[3] = {40.0 + 60 * uniform_unit(rng), 40.0 + 60 * uniform_unit(rng), 60.0 + 80 * uniform_unit(rng)};
  const int band_height = 20 + static_cast<int>(uniform_index(rng, 16));
  fill_rect(image, 0, 8, width, band_height, band);

  const int cell_w = 6;
  const int cell_h = 10;
  for (int row_y = 8 + band_height + 12; row_y + cell_h < height - 4; row_y += 16 + static_cast<int>(uniform_index(rng, 6))) {
    int x = 10 + static_cast<int>(uniform_index(rng, 12));
    const int words = 2 + static_cast<int>(uniform_index(rng, 5));
    const double ink = 25.0 + 40 * uniform_unit(rng);
    for (int w = 0; w < words && x < width - 40; ++w) {
      const int letters = 2 + static_cast<int>(uniform_index(rng, 8));
      for (int l = 0; l < letters && x + cell_w < width - 8; ++l) {
        // 4x7 random bitmap inside the cell.
        for (int gy = 0; gy < 7; ++gy) {
          for (int gx = 0; gx < 4; ++gx) {
            if (uniform_unit(rng) < 0.45) {
              for (int c = 0; c < 3; ++c) image.at(x + gx, row_y + gy + 1, c) = clamp_byte(ink + 8 * standard_normal(rng));
            }
          }
        }
        x += cell_w;
      }
      x += cell_w + static_cast<int>(uniform_index(rng, 10));
    }
    // Right-aligned amount column.
    int ax = width - 12 - 5 * cell_w;
    for (int l = 0; l < 5; ++l, ax += cell_w) {
      for (int gy = 0; gy < 7; ++gy) {
        for (int gx = 0; gx < 4; ++gx) {
          if (uniform_unit(rng) < 0.5) {
            for (int c = 0; c < 3; ++c) image.at(ax + gx, row_y + gy + 1, c) = clamp_byte(ink);
          }
        }
      }
    }
  }
  return image;
}

Image paste_recompressed(const Image& base, const Image& donor, const ForgedRegion& region, int paste_quality) {
  if (region.x % 8 || region.y % 8 || region.width <= 0 || region.height <= 0 ||
      region.x + region.width > base.width || region.y + region.height > base.height ||
      region.width > donor.width || region.height > donor.height || base.channels != donor.channels) {
    throw Error(ErrorCode::ShapeMismatch, "paste region must be 8-aligned and inside both images");
  }
  Image crop(region.width, region.height, donor.channels);
  for (int y = 0; y < region.height; ++y) {
    for (int x = 0; x < region.width; ++x) {
      for (int c = 0; c < donor.channels; ++c) crop.at(x, y, c) = donor.at(x, y, c);
    }
  }
  const Image recompressed = decode_image(encode_jpeg(crop, {.quality = paste_quality}));
  Image out = base;
  for (int y = 0; y < region.height; ++y) {
    for (int x = 0; x < region.width; ++x) {
      for (int c = 0; c < base.channels; ++c) out.at(region.x + x, region.y + y, c) = recompressed.at(x, y, c);
    }
  }
  return out;
}

std::vector<SynthDocument> generate_corpus(const SynthOptions& o) {
  if (o.width < 256 || o.height < 128 || o.pristine < 0 || o.forged < 0 || o.test_every < 1 ||
      o.region_min < 8 || o.region_max < o.region_min || o.region_max > o.width - 128) {
    throw Error(ErrorCode::ConfigError, "synthetic corpus options leave no room for forged and pristine windows");
  }
  std::mt19937_64 rng(o.seed ^ 0x5ca1ab1eULL);
  std::vector<SynthDocument> docs;
  const int total = o.pristine + o.forged;
  for (int i = 0; i < total; ++i) {
    SynthDocument doc;
    doc.id = fmt::format("syn{:04d}", i + 1);
    const bool forged = i >= o.pristine;
    const int class_index = forged ? i - o.pristine : i;
    doc.label = forged ? Label::Forged : Label::Pristine;
    doc.split = (class_index % o.test_every == o.test_every - 1) ? Split::Test : Split::Train;
    Image page = render_receipt(o.width, o.height, o.seed * 1000003ULL + static_cast<std::uint64_t>(i), o.noise_sigma);
    if (forged) {
      const int span = (o.region_max - o.region_min) / 8 + 1;
      ForgedRegion r;
      r.width = align_down(o.region_min) + 8 * static_cast<int>(uniform_index(rng, static_cast<std::size_t>(span)));
      r.height = align_down(o.region_min) + 8 * static_cast<int>(uniform_index(rng, static_cast<std::size_t>(span)));
      r.height = std::min(r.height, align_down(o.height));
      // Keep a 128-pixel strip free on at least one side so pristine windows exist.
      for (;;) {
        r.x = 8 * static_cast<int>(uniform_index(rng, static_cast<std::size_t>((o.width - r.width) / 8 + 1)));
        r.y = 8 * static_cast<int>(uniform_index(rng, static_cast<std::size_t>((o.height - r.height) / 8 + 1)));
        const bool free_x = r.x >= 128 || r.x + r.width <= o.width - 128;
        const bool free_y = r.y >= 128 || r.y + r.height <= o.height - 128;
        if (free_x || free_y) break;
      }
      const Image donor =
          render_receipt(o.width, o.height, o.seed * 1000003ULL + 500000ULL + static_cast<std::uint64_t>(i), o.noise_sigma);
      page = paste_recompressed(page, donor, r, o.paste_quality);
      doc.region = r;
    }
    doc.jpeg = encode_jpeg(page, {.quality = o.base_quality});
    docs.push_back(std::move(doc));
  }
  return docs;
}

void write_corpus(const std::filesystem::path& root, const std::vector<SynthDocument>& documents) {
  std::string labels = "# synthetic receipts\n";
  std::string train;
  std::string test;
  for (const auto& d : documents) {
    write_file_atomic(root / "images" / (d.id + ".jpg"),
                      std::string_view(reinterpret_cast<const char*>(d.jpeg.data()), d.jpeg.size()));
    labels += fmt::format("{} {}\n", d.id, label_name(d.label));
    if (d.region) labels += fmt::format("region {} {} {} {}\n", d.region->x, d.region->y, d.region->width, d.region->height);
    (d.split == Split::Test ? test : train) += fmt::format("{} {}\n", d.id, label_name(d.label));
  }
  write_file_atomic(root / "labels.txt", labels);
  write_file_atomic(root / "splits" / "train.txt", train);
  write_file_atomic(root / "splits" / "test.txt", test);
}

}  // namespace forgebench

#include "forgebench/jpeg_dct.hpp"

#include <cmath>
#include <numbers>
#include <optional>

#include "forgebench/error.hpp"
#include "forgebench/image_io.hpp"

namespace forgebench {

const std::array<int, 64> kZigzagToNatural = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
    41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
    30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

namespace {

[[noreturn]] void corrupt(std::size_t offset, const std::string& what) {
  throw Error(ErrorCode::CorruptStream, what + " at byte offset " + std::to_string(offset));
}

struct HuffmanTable {
  bool defined = false;
  std::array<std::int32_t, 17> maxcode{};  // -1 when no codes of that length
  std::array<std::int32_t, 17> mincode{};
  std::array<std::int32_t, 17> valptr{};
  std::vector<std::uint8_t> values;
};

HuffmanTable build_huffman(const std::array<std::uint8_t, 16>& counts, std::vector<std::uint8_t> values,
                           std::size_t offset) {
  HuffmanTable table;
  table.defined = true;
  table.values = std::move(values);
  std::int32_t code = 0;
  std::int32_t k = 0;
  for (int len = 1; len <= 16; ++len) {
    const int n = counts[len - 1];
    if (n == 0) {
      table.maxcode[len] = -1;
    } else {
      table.valptr[len] = k;
      table.mincode[len] = code;
      code += n;
      k += n;
      table.maxcode[len] = code - 1;
    }
    if (code > (1 << len)) corrupt(offset, "over-subscribed Huffman table");
    code <<= 1;
  }
  return table;
}

struct Component {
  int id = 0;
  int h = 1;
  int v = 1;
  int tq = 0;
  int blocks_wide = 0;  // ceil(component width / 8)
  int blocks_high = 0;
  int padded_wide = 0;  // MCU-padded extents used by interleaved scans
  int padded_high = 0;
  std::vector<DctBlock> blocks;  // only allocated for the luminance component
  int dc_table = 0;
  int ac_table = 0;
  int dc_pred = 0;
};

/// Entropy-segment bit reader. Bytes are pulled on demand so a scan never
/// reads past its final padded byte; hitting a marker while bits are still
/// needed is reported as corruption.
class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

  int bit() {
    if (nbits_ == 0) fill();
    --nbits_;
    return (acc_ >> nbits_) & 1;
  }

  int bits(int n) {
    int v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | bit();
    return v;
  }

  int decode(const HuffmanTable& table) {
    std::int32_t code = 0;
    for (int len = 1; len <= 16; ++len) {
      code = (code << 1) | bit();
      if (table.maxcode[len] >= 0 && code <= table.maxcode[len]) {
        const auto index = static_cast<std::size_t>(table.valptr[len] + code - table.mincode[len]);
        if (index >= table.values.size()) corrupt(pos_, "Huffman value index out of range");
        return table.values[index];
      }
    }
    corrupt(pos_, "invalid Huffman code");
  }

  /// Drops the fractional byte and consumes the expected RSTn marker.
  void restart(int expected_index) {
    nbits_ = 0;
    if (pos_ + 1 >= data_.size() || data_[pos_] != 0xFF) corrupt(pos_, "missing restart marker");
    std::size_t p = pos_;
    while (p < data_.size() && data_[p] == 0xFF) ++p;
    if (p >= data_.size() || data_[p] != 0xD0 + expected_index) corrupt(pos_, "unexpected restart marker");
    pos_ = p + 1;
  }

  std::size_t position() const { return pos_; }

 private:
  void fill() {
    if (pos_ >= data_.size()) corrupt(pos_, "entropy-coded segment truncated");
    const std::uint8_t byte = data_[pos_];
    if (byte == 0xFF) {
      if (pos_ + 1 >= data_.size()) corrupt(pos_, "entropy-coded segment truncated");
      if (data_[pos_ + 1] != 0x00) corrupt(pos_, "marker inside entropy-coded segment");
      pos_ += 2;
    } else {
      pos_ += 1;
    }
    acc_ = byte;
    nbits_ = 8;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::uint32_t acc_ = 0;
  int nbits_ = 0;
};

int extend(int value, int size) {
  return value < (1 << (size - 1)) ? value - (1 << size) + 1 : value;
}

class Decoder {
 public:
  explicit Decoder(std::span<const std::uint8_t> bytes) : data_(bytes) {}

  DctPlane run() {
    if (data_.size() < 2 || data_[0] != 0xFF || data_[1] != 0xD8) {
      throw Error(ErrorCode::NotAJpeg, "missing SOI marker");
    }
    pos_ = 2;
    bool frame_seen = false;
    bool any_scan = false;
    while (true) {
      const int marker = next_marker();
      if (marker == 0xD9) break;  // EOI
      if (marker == 0xD8) corrupt(pos_ - 2, "nested SOI");
      if (marker >= 0xD0 && marker <= 0xD7) corrupt(pos_ - 2, "restart marker outside scan");
      if (marker == 0x01) continue;  // TEM, no length
      const std::size_t seg_start = pos_;
      const std::size_t length = read_u16();
      if (length < 2 || seg_start + length > data_.size()) corrupt(seg_start, "segment length out of range");
      const std::size_t seg_end = seg_start + length;
      switch (marker) {
        case 0xC0:
        case 0xC1:
          if (frame_seen) corrupt(seg_start, "second frame header");
          parse_sof(seg_end);
          frame_seen = true;
          break;
        case 0xC2:
        case 0xC6:
        case 0xCA:
        case 0xCE:
          throw Error(ErrorCode::ProgressiveUnsupported, "progressive JPEG frame");
        case 0xC3:
        case 0xC5:
        case 0xC7:
        case 0xC9:
        case 0xCB:
        case 0xCD:
        case 0xCF:
          throw Error(ErrorCode::ProgressiveUnsupported, "non-baseline JPEG coding process");
        case 0xC4:
          parse_dht(seg_end);
          break;
        case 0xDB:
          parse_dqt(seg_end);
          break;
        case 0xDD:
          if (length != 4) corrupt(seg_start, "bad DRI length");
          restart_interval_ = static_cast<int>(read_u16());
          break;
        case 0xDA:
          if (!frame_seen) corrupt(seg_start, "scan before frame header");
          parse_sos_and_decode(seg_end);
          any_scan = true;
          continue;  // pos_ already past the entropy-coded data
        default:
          break;  // APPn, COM, DNL and friends are skipped
      }
      pos_ = seg_end;
    }
    if (!frame_seen || !any_scan) corrupt(pos_, "no frame or scan before EOI");
    if (!luma_quant_) corrupt(pos_, "luminance quantization table never defined");

    DctPlane plane;
    plane.width = width_;
    plane.height = height_;
    Component& luma = components_.front();
    plane.blocks_wide = luma.blocks_wide;
    plane.blocks_high = luma.blocks_high;
    plane.blocks.resize(static_cast<std::size_t>(luma.blocks_wide) * luma.blocks_high);
    for (int by = 0; by < luma.blocks_high; ++by) {
      for (int bx = 0; bx < luma.blocks_wide; ++bx) {
        plane.block(bx, by) = luma.blocks[static_cast<std::size_t>(by) * luma.padded_wide + bx];
      }
    }
    plane.quant_table = *luma_quant_;
    return plane;
  }

 private:
  std::size_t read_u16() {
    if (pos_ + 2 > data_.size()) corrupt(pos_, "unexpected end of stream");
    const std::size_t v = (static_cast<std::size_t>(data_[pos_]) << 8) | data_[pos_ + 1];
    pos_ += 2;
    return v;
  }

  std::uint8_t read_u8(std::size_t limit) {
    if (pos_ >= limit) corrupt(pos_, "segment overrun");
    return data_[pos_++];
  }

  int next_marker() {
    if (pos_ >= data_.size() || data_[pos_] != 0xFF) corrupt(pos_, "expected marker");
    while (pos_ < data_.size() && data_[pos_] == 0xFF) ++pos_;  // fill bytes
    if (pos_ >= data_.size()) corrupt(pos_, "stream ends inside marker");
    return data_[pos_++];
  }

  void parse_dqt(std::size_t end) {
    while (pos_ < end) {
      const std::uint8_t pq_tq = read_u8(end);
      const int precision = pq_tq >> 4;
      const int id = pq_tq & 0x0F;
      if (id > 3 || precision > 1) corrupt(pos_ - 1, "bad DQT table spec");
      QuantTable table{};
      for (int k = 0; k < 64; ++k) {
        std::uint16_t q = read_u8(end);
        if (precision == 1) q = static_cast<std::uint16_t>((q << 8) | read_u8(end));
        if (q == 0 || q > 255) corrupt(pos_ - 1, "quantization entry outside [1, 255]");
        table[kZigzagToNatural[k]] = q;
      }
      quant_[id] = table;
    }
  }

  void parse_dht(std::size_t end) {
    while (pos_ < end) {
      const std::size_t spec_at = pos_;
      const std::uint8_t tc_th = read_u8(end);
      const int cls = tc_th >> 4;
      const int id = tc_th & 0x0F;
      if (cls > 1 || id > 3) corrupt(spec_at, "bad DHT table spec");
      std::array<std::uint8_t, 16> counts{};
      std::size_t total = 0;
      for (auto& c : counts) {
        c = read_u8(end);
        total += c;
      }
      if (total > 256) corrupt(spec_at, "too many Huffman symbols");
      std::vector<std::uint8_t> values(total);
      for (auto& v : values) v = read_u8(end);
      (cls == 0 ? dc_tables_ : ac_tables_)[id] = build_huffman(counts, std::move(values), spec_at);
    }
  }

  void parse_sof(std::size_t end) {
    const std::size_t at = pos_;
    const int precision = read_u8(end);
    if (precision != 8) throw Error(ErrorCode::ProgressiveUnsupported, "only 8-bit sample precision is supported");
    height_ = static_cast<int>(read_u16());
    width_ = static_cast<int>(read_u16());
    const int count = read_u8(end);
    if (width_ == 0 || height_ == 0) corrupt(at, "zero image dimension");
    if (count < 1 || count > 4) corrupt(at, "bad component count");
    components_.resize(static_cast<std::size_t>(count));
    for (auto& c : components_) {
      c.id = read_u8(end);
      const std::uint8_t hv = read_u8(end);
      c.h = hv >> 4;
      c.v = hv & 0x0F;
      c.tq = read_u8(end);
      if (c.h < 1 || c.h > 4 || c.v < 1 || c.v > 4 || c.tq > 3) corrupt(at, "bad component spec");
      hmax_ = std::max(hmax_, c.h);
      vmax_ = std::max(vmax_, c.v);
    }
    mcus_wide_ = (width_ + 8 * hmax_ - 1) / (8 * hmax_);
    mcus_high_ = (height_ + 8 * vmax_ - 1) / (8 * vmax_);
    for (auto& c : components_) {
      const int comp_w = (width_ * c.h + hmax_ - 1) / hmax_;
      const int comp_h = (height_ * c.v + vmax_ - 1) / vmax_;
      c.blocks_wide = (comp_w + 7) / 8;
      c.blocks_high = (comp_h + 7) / 8;
      c.padded_wide = mcus_wide_ * c.h;
      c.padded_high = mcus_high_ * c.v;
    }
    Component& luma = components_.front();
    luma.blocks.assign(static_cast<std::size_t>(luma.padded_wide) * luma.padded_high, DctBlock{});
  }

  void parse_sos_and_decode(std::size_t end) {
    const std::size_t at = pos_;
    const int ns = read_u8(end);
    if (ns < 1 || ns > 4) corrupt(at, "bad scan component count");
    std::vector<Component*> scan;
    for (int i = 0; i < ns; ++i) {
      const int id = read_u8(end);
      const std::uint8_t tables = read_u8(end);
      Component* found = nullptr;
      for (auto& c : components_) {
        if (c.id == id) found = &c;
      }
      if (!found) corrupt(at, "scan references unknown component");
      found->dc_table = tables >> 4;
      found->ac_table = tables & 0x0F;
      if (found->dc_table > 3 || found->ac_table > 3) corrupt(at, "bad scan table selector");
      if (!dc_tables_[found->dc_table].defined || !ac_tables_[found->ac_table].defined) {
        corrupt(at, "scan uses undefined Huffman table");
      }
      scan.push_back(found);
    }
    const int ss = read_u8(end);
    const int se = read_u8(end);
    const int ahal = read_u8(end);
    if (ss != 0 || se != 63 || ahal != 0) corrupt(at, "non-sequential spectral selection");
    if (pos_ != end) corrupt(at, "SOS length mismatch");
    for (const Component* c : scan) {
      if (c == &components_.front()) {
        if (!quant_[c->tq]) corrupt(at, "luminance quantization table not defined before scan");
        luma_quant_ = quant_[c->tq];
      }
    }

    for (auto* c : scan) c->dc_pred = 0;
    BitReader reader(data_, pos_);
    const bool interleaved = ns > 1;
    const int units_wide = interleaved ? mcus_wide_ : scan.front()->blocks_wide;
    const int units_high = interleaved ? mcus_high_ : scan.front()->blocks_high;
    const long total = static_cast<long>(units_wide) * units_high;
    int restart_index = 0;
    DctBlock scratch{};
    for (long unit = 0; unit < total; ++unit) {
      if (restart_interval_ > 0 && unit > 0 && unit % restart_interval_ == 0) {
        reader.restart(restart_index);
        restart_index = (restart_index + 1) & 7;
        for (auto* c : scan) c->dc_pred = 0;
      }
      const int ux = static_cast<int>(unit % units_wide);
      const int uy = static_cast<int>(unit / units_wide);
      for (auto* c : scan) {
        const int bh = interleaved ? c->h : 1;
        const int bv = interleaved ? c->v : 1;
        for (int by = 0; by < bv; ++by) {
          for (int bx = 0; bx < bh; ++bx) {
            DctBlock* target = &scratch;
            if (!c->blocks.empty()) {
              const int gx = interleaved ? ux * c->h + bx : ux;
              const int gy = interleaved ? uy * c->v + by : uy;
              target = &c->blocks[static_cast<std::size_t>(gy) * c->padded_wide + gx];
            }
            decode_block(reader, *c, *target);
          }
        }
      }
    }
    pos_ = reader.position();
  }

  void decode_block(BitReader& reader, Component& c, DctBlock& out) {
    out.fill(0);
    const int t = reader.decode(dc_tables_[c.dc_table]);
    if (t > 11) corrupt(reader.position(), "DC magnitude category out of range");
    const int diff = t == 0 ? 0 : extend(reader.bits(t), t);
    c.dc_pred += diff;
    out[0] = c.dc_pred;
    const HuffmanTable& ac = ac_tables_[c.ac_table];
    for (int k = 1; k < 64;) {
      const int rs = reader.decode(ac);
      const int r = rs >> 4;
      const int s = rs & 0x0F;
      if (s == 0) {
        if (r != 15) break;  // EOB
        k += 16;
        continue;
      }
      k += r;
      if (k > 63) corrupt(reader.position(), "AC run past end of block");
      out[kZigzagToNatural[k]] = extend(reader.bits(s), s);
      ++k;
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  int width_ = 0;
  int height_ = 0;
  int hmax_ = 1;
  int vmax_ = 1;
  int mcus_wide_ = 0;
  int mcus_high_ = 0;
  int restart_interval_ = 0;
  std::vector<Component> components_;
  std::array<std::optional<QuantTable>, 4> quant_;
  std::optional<QuantTable> luma_quant_;
  std::array<HuffmanTable, 4> dc_tables_;
  std::array<HuffmanTable, 4> ac_tables_;
};

const std::array<double, 64>& cosine_matrix() {
  // C[u][x] = a(u) cos((2x+1) u pi / 16)
  static const std::array<double, 64> table = [] {
    std::array<double, 64> c{};
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) c[u * 8 + x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return c;
  }();
  return table;
}

}  // namespace

DctPlane decode_jpeg_dct(std::span<const std::uint8_t> bytes) {
  return Decoder(bytes).run();
}

DctLoadResult load_dct_plane(std::span<const std::uint8_t> bytes) {
  DctLoadResult result;
  try {
    result.plane = decode_jpeg_dct(bytes);
    return result;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotAJpeg && e.code() != ErrorCode::ProgressiveUnsupported) throw;
    result.fallback_reason = e.what();
  }
  const Image pixels = decode_image(bytes);
  JpegEncodeOptions options;
  options.quality = kFallbackQuality;
  const Bytes baseline = encode_jpeg(pixels, options);
  result.plane = decode_jpeg_dct(baseline);
  result.reencoded = true;
  return result;
}

Block8x8 dct2d_reference(const Block8x8& pixels) {
  const auto& c = cosine_matrix();
  Block8x8 rows{};  // rows[y][u] = sum_x C[u][x] p[y][x]
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += c[u * 8 + x] * pixels[y * 8 + x];
      rows[y * 8 + u] = s;
    }
  }
  Block8x8 out{};  // out[v][u] with v vertical frequency
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += c[v * 8 + y] * rows[y * 8 + u];
      out[v * 8 + u] = s;
    }
  }
  return out;
}

Block8x8 idct2d_reference(const Block8x8& coefficients) {
  const auto& c = cosine_matrix();
  Block8x8 cols{};  // cols[y][u] = sum_v C[v][y] F[v][u]
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += c[v * 8 + y] * coefficients[v * 8 + u];
      cols[y * 8 + u] = s;
    }
  }
  Block8x8 out{};
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += c[u * 8 + x] * cols[y * 8 + u];
      out[y * 8 + x] = s;
    }
  }
  return out;
}

}  // namespace forgebench

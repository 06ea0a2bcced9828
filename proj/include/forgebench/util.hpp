#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace forgebench {

using Bytes = std::vector<std::uint8_t>;

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

/// 64-bit FNV-1a; used to derive per-record seeds in a platform-stable way.
std::uint64_t fnv1a64(std::string_view text);

/// RFC 4648 base64, no line breaks.
std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

Bytes read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Uniform index in [0, n) from a 64-bit engine. std::uniform_int_distribution
/// is implementation-defined, so sampling that has to be reproducible across
/// toolchains goes through this instead.
template <typename Engine>
std::size_t uniform_index(Engine& engine, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw = 0;
  do {
    draw = static_cast<std::uint64_t>(engine());
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % bound);
}

/// Uniform double in [0, 1) using the top 53 bits of a 64-bit draw.
template <typename Engine>
double uniform_unit(Engine& engine) {
  return static_cast<double>(static_cast<std::uint64_t>(engine()) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on uniform_unit.
template <typename Engine>
double standard_normal(Engine& engine);

/// Deterministic Fisher-Yates shuffle.
template <typename Engine, typename T>
void shuffle_in_place(Engine& engine, std::vector<T>& values) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[uniform_index(engine, i)]);
  }
}

std::string trim(std::string_view text);
std::vector<std::string> split_whitespace(std::string_view text);

/// Filesystem-safe slug of a model name ("CNN (OH-JPEG)" -> "CNN_OH-JPEG").
std::string file_slug(std::string_view name);

}  // namespace forgebench

#include <cmath>
#include <numbers>

namespace forgebench {

template <typename Engine>
double standard_normal(Engine& engine) {
  double u1 = 0.0;
  do {
    u1 = uniform_unit(engine);
  } while (u1 <= 0.0);
  const double u2 = uniform_unit(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace forgebench

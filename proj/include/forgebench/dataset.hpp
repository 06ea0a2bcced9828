#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forgebench/features.hpp"

namespace forgebench {

enum class Label { Pristine = 0, Forged = 1 };
enum class Split { Train, Test };

std::string_view label_name(Label label);
std::string_view split_name(Split split);
Label parse_label_token(std::string_view token);  // throws UnknownLabelToken
Split parse_split_token(std::string_view token);  // throws ConfigError

struct ForgedRegion {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  friend bool operator==(const ForgedRegion&, const ForgedRegion&) = default;
};

struct DocumentRecord {
  std::string id;
  std::filesystem::path image_path;
  Label label = Label::Pristine;
  Split split = Split::Train;
  std::vector<ForgedRegion> regions;
  int width = 0;  // decoded pixel extent, filled at scan time
  int height = 0;

  friend bool operator==(const DocumentRecord&, const DocumentRecord&) = default;
};

struct LabelEntry {
  Label label = Label::Pristine;
  std::vector<ForgedRegion> regions;
};

/// labels.txt grammar:
///
///   # comment
///   <id> <pristine|forged>
///   region <x> <y> <w> <h>      (attaches to the most recent id; forged only)
///
/// Errors carry the 1-based line number.
std::map<std::string, LabelEntry> parse_metadata_text(std::string_view text);
std::map<std::string, LabelEntry> parse_metadata(const std::filesystem::path& metadata_file);

struct SkipEntry {
  std::string name;
  std::string reason;
};

struct ScanResult {
  std::vector<DocumentRecord> records;  // sorted by id
  std::vector<SkipEntry> skipped;
};

/// Builds records for every id listed in `split_file` (`<id or filename>
/// [label]` per line). Labels come from the split line when present, else from
/// `<root>/labels.txt`; regions always come from labels.txt. Images are fully
/// decoded; unreadable or corrupt ones land in `skipped`.
ScanResult scan_dataset(const std::filesystem::path& root, const std::filesystem::path& split_file,
                        std::optional<Split> split = std::nullopt);

struct Patch {
  std::string parent_id;
  PixelRect rect;
  PatchLabel label = PatchLabel::Pristine;

  friend bool operator==(const Patch&, const Patch&) = default;
};

inline constexpr int kDefaultPristinePatches = 2;

bool rects_intersect(const PixelRect& rect, const ForgedRegion& region);

/// Forged records: one forged window (max overlap with the first region,
/// smallest x then y on ties) plus `n_pristine` windows disjoint from every
/// region. Pristine records: `n_pristine + 1` windows. All windows are
/// 8-aligned 128x128 and pristine picks are seeded by the record id mixed
/// with `seed`.
std::vector<Patch> extract_patches(const DocumentRecord& record, int image_width, int image_height,
                                   int n_pristine = kDefaultPristinePatches, std::uint64_t seed = 0);

/// Line-delimited manifest, one JSON object per record:
///   {"height":..,"id":..,"label":"forged","path":..,"regions":[[x,y,w,h]],"split":"test","width":..}
std::string serialize_manifest(const std::vector<DocumentRecord>& records);
std::vector<DocumentRecord> parse_manifest(std::string_view text);
void write_manifest(const std::filesystem::path& path, const std::vector<DocumentRecord>& records);
std::vector<DocumentRecord> read_manifest(const std::filesystem::path& path);

}  // namespace forgebench

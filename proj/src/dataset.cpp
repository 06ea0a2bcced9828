#include "forgebench/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "forgebench/error.hpp"
#include "forgebench/image_io.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

std::string_view label_name(Label label) { return label == Label::Forged ? "forged" : "pristine"; }

std::string_view split_name(Split split) { return split == Split::Test ? "test" : "train"; }

Label parse_label_token(std::string_view token) {
  if (token == "pristine" || token == "authentic" || token == "0") return Label::Pristine;
  if (token == "forged" || token == "fraudulent" || token == "1") return Label::Forged;
  throw Error(ErrorCode::UnknownLabelToken, "'" + std::string(token) + "'");
}

Split parse_split_token(std::string_view token) {
  if (token == "train") return Split::Train;
  if (token == "test") return Split::Test;
  throw Error(ErrorCode::ConfigError, "unknown split '" + std::string(token) + "'");
}

namespace {

int parse_int(std::string_view token, std::size_t line_no) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": bad integer '" + std::string(token) + "'");
  }
  return value;
}

std::string strip_comment(std::string_view line) {
  const auto hash = line.find('#');
  return trim(hash == std::string_view::npos ? line : line.substr(0, hash));
}

}  // namespace

std::map<std::string, LabelEntry> parse_metadata_text(std::string_view text) {
  std::map<std::string, LabelEntry> out;
  std::string current;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string line = strip_comment(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    const auto tokens = split_whitespace(line);
    const auto where = "line " + std::to_string(line_no);
    if (tokens[0] == "region") {
      if (tokens.size() != 5) throw Error(ErrorCode::MalformedLine, where + ": region needs x y w h");
      if (current.empty()) throw Error(ErrorCode::MalformedLine, where + ": region before any id");
      LabelEntry& entry = out[current];
      if (entry.label != Label::Forged) throw Error(ErrorCode::MalformedLine, where + ": region on a pristine record");
      ForgedRegion region{parse_int(tokens[1], line_no), parse_int(tokens[2], line_no), parse_int(tokens[3], line_no),
                          parse_int(tokens[4], line_no)};
      if (region.x < 0 || region.y < 0 || region.width <= 0 || region.height <= 0) {
        throw Error(ErrorCode::MalformedLine, where + ": region must have x,y >= 0 and w,h > 0");
      }
      entry.regions.push_back(region);
      continue;
    }
    if (tokens.size() != 2) throw Error(ErrorCode::MalformedLine, where + ": expected '<id> <label>'");
    Label label;
    try {
      label = parse_label_token(tokens[1]);
    } catch (const Error&) {
      throw Error(ErrorCode::UnknownLabelToken, where + ": '" + tokens[1] + "'");
    }
    if (out.count(tokens[0])) throw Error(ErrorCode::DuplicateId, where + ": " + tokens[0]);
    out[tokens[0]] = LabelEntry{label, {}};
    current = tokens[0];
  }
  return out;
}

std::map<std::string, LabelEntry> parse_metadata(const std::filesystem::path& metadata_file) {
  return parse_metadata_text(read_file_text(metadata_file));
}

namespace {

std::optional<std::filesystem::path> resolve_image(const std::filesystem::path& images, const std::string& token) {
  const std::filesystem::path named = images / token;
  if (named.has_extension() && std::filesystem::is_regular_file(named)) return named;
  for (const char* ext : {".jpg", ".jpeg", ".JPG", ".png", ".PNG"}) {
    auto candidate = images / (token + ext);
    if (std::filesystem::is_regular_file(candidate)) return candidate;
  }
  return std::nullopt;
}

}  // namespace

ScanResult scan_dataset(const std::filesystem::path& root, const std::filesystem::path& split_file,
                        std::optional<Split> split) {
  if (!std::filesystem::is_regular_file(split_file)) {
    throw Error(ErrorCode::MissingSplitFile, split_file.string());
  }
  const Split resolved_split = split ? *split
                                     : (split_file.stem() == "test" ? Split::Test : Split::Train);
  std::map<std::string, LabelEntry> metadata;
  const auto labels_path = root / "labels.txt";
  if (std::filesystem::is_regular_file(labels_path)) metadata = parse_metadata(labels_path);

  ScanResult result;
  std::set<std::string> seen;
  std::istringstream lines(read_file_text(split_file));
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(lines, raw)) {
    ++line_no;
    const std::string line = strip_comment(raw);
    if (line.empty()) continue;
    const auto tokens = split_whitespace(line);
    if (tokens.size() > 2) {
      throw Error(ErrorCode::MalformedLine, split_file.filename().string() + " line " + std::to_string(line_no));
    }
    const std::string& token = tokens[0];
    const std::string id = std::filesystem::path(token).stem().string();
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, id);

    DocumentRecord record;
    record.id = id;
    record.split = resolved_split;
    const auto meta = metadata.find(id);
    if (tokens.size() == 2) {
      record.label = parse_label_token(tokens[1]);
      if (meta != metadata.end() && meta->second.label != record.label) {
        throw Error(ErrorCode::MalformedLine, "label for " + id + " disagrees with labels.txt");
      }
    } else if (meta != metadata.end()) {
      record.label = meta->second.label;
    } else {
      throw Error(ErrorCode::UnlabeledRecord, id);
    }
    if (meta != metadata.end()) record.regions = meta->second.regions;

    const auto path = resolve_image(root / "images", token);
    if (!path) {
      result.skipped.push_back({id, "image file not found"});
      continue;
    }
    record.image_path = *path;
    try {
      const Image image = decode_image(read_file_bytes(*path));
      record.width = image.width;
      record.height = image.height;
    } catch (const Error& e) {
      result.skipped.push_back({id, e.what()});
      continue;
    }
    const bool regions_ok = std::all_of(record.regions.begin(), record.regions.end(), [&](const ForgedRegion& r) {
      return r.x + r.width <= record.width && r.y + r.height <= record.height;
    });
    if (!regions_ok) {
      result.skipped.push_back({id, "forged region outside image bounds"});
      continue;
    }
    result.records.push_back(std::move(record));
  }
  if (result.records.empty()) throw Error(ErrorCode::EmptyManifest, split_file.string());
  std::sort(result.records.begin(), result.records.end(),
            [](const DocumentRecord& a, const DocumentRecord& b) { return a.id < b.id; });
  return result;
}

bool rects_intersect(const PixelRect& rect, const ForgedRegion& region) {
  return rect.x < region.x + region.width && region.x < rect.x + rect.width && rect.y < region.y + region.height &&
         region.y < rect.y + rect.height;
}

namespace {

long overlap_area(const PixelRect& rect, const ForgedRegion& region) {
  const long w = std::min(rect.x + rect.width, region.x + region.width) - std::max(rect.x, region.x);
  const long h = std::min(rect.y + rect.height, region.y + region.height) - std::max(rect.y, region.y);
  return (w > 0 && h > 0) ? w * h : 0;
}

}  // namespace

std::vector<Patch> extract_patches(const DocumentRecord& record, int image_width, int image_height, int n_pristine,
                                   std::uint64_t seed) {
  if (image_width < kPatchPixels || image_height < kPatchPixels) {
    throw Error(ErrorCode::ImageTooSmall, record.id);
  }
  if (n_pristine < 0) throw Error(ErrorCode::ConfigError, "n_pristine must be >= 0");
  const bool forged = record.label == Label::Forged;
  if (forged && record.regions.empty()) throw Error(ErrorCode::ForgedWithoutRegion, record.id);

  // x-major enumeration so the first strict maximum is the smallest-x, then
  // smallest-y window.
  std::vector<PixelRect> windows;
  for (int x = 0; x + kPatchPixels <= image_width; x += 8) {
    for (int y = 0; y + kPatchPixels <= image_height; y += 8) windows.push_back({x, y});
  }

  std::vector<Patch> out;
  if (forged) {
    const ForgedRegion& first = record.regions.front();
    const PixelRect* best = &windows.front();
    long best_area = -1;
    for (const auto& w : windows) {
      const long area = overlap_area(w, first);
      if (area > best_area) {
        best_area = area;
        best = &w;
      }
    }
    out.push_back({record.id, *best, PatchLabel::Forged});
  }

  std::vector<PixelRect> candidates;
  for (const auto& w : windows) {
    const bool clean = std::none_of(record.regions.begin(), record.regions.end(),
                                    [&](const ForgedRegion& r) { return rects_intersect(w, r); });
    if (clean) candidates.push_back(w);
  }
  const auto wanted = static_cast<std::size_t>(forged ? n_pristine : n_pristine + 1);
  if (candidates.size() < wanted) {
    throw Error(ErrorCode::NoPristineWindowAvailable,
                record.id + ": " + std::to_string(candidates.size()) + " clean windows for " + std::to_string(wanted));
  }
  std::mt19937_64 rng(fnv1a64(record.id) ^ seed);
  for (std::size_t i = 0; i < wanted; ++i) {
    std::swap(candidates[i], candidates[i + uniform_index(rng, candidates.size() - i)]);
  }
  std::vector<PixelRect> picked(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(wanted));
  std::sort(picked.begin(), picked.end(),
            [](const PixelRect& a, const PixelRect& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
  for (const auto& rect : picked) out.push_back({record.id, rect, PatchLabel::Pristine});
  return out;
}

std::string serialize_manifest(const std::vector<DocumentRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["path"] = r.image_path.string();
    j["label"] = label_name(r.label);
    j["split"] = split_name(r.split);
    j["width"] = r.width;
    j["height"] = r.height;
    j["regions"] = nlohmann::json::array();
    for (const auto& g : r.regions) j["regions"].push_back({g.x, g.y, g.width, g.height});
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<DocumentRecord> parse_manifest(std::string_view text) {
  std::vector<DocumentRecord> out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto line = text.substr(start, end - start);
    start = end + 1;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DocumentRecord r;
      r.id = j.at("id").get<std::string>();
      r.image_path = j.at("path").get<std::string>();
      r.label = parse_label_token(j.at("label").get<std::string>());
      r.split = parse_split_token(j.at("split").get<std::string>());
      r.width = j.at("width").get<int>();
      r.height = j.at("height").get<int>();
      for (const auto& g : j.at("regions")) {
        r.regions.push_back({g.at(0).get<int>(), g.at(1).get<int>(), g.at(2).get<int>(), g.at(3).get<int>()});
      }
      if (!ids.insert(r.id).second) throw Error(ErrorCode::DuplicateId, r.id);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedLine, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<DocumentRecord>& records) {
  write_file_atomic(path, serialize_manifest(records));
}

std::vector<DocumentRecord> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file_text(path));
}

}  // namespace forgebench

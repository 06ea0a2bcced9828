#include "forgebench/pipeline.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "forgebench/error.hpp"
#include "forgebench/jpeg_dct.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

namespace {

ImageFeatures encode_rects(const DctLoadResult& loaded, const std::vector<std::pair<PixelRect, PatchLabel>>& picks,
                           const FeatureOptions& options) {
  ImageFeatures out;
  out.reencoded = loaded.reencoded;
  out.fallback_reason = loaded.fallback_reason;
  out.cache.width = loaded.plane.width;
  out.cache.height = loaded.plane.height;
  out.cache.clamp_t = options.clamp_t;
  out.cache.pql = options.pql;
  std::vector<PixelRect> rects;
  for (const auto& p : picks) rects.push_back(p.first);
  const auto blocks = partition_patches(loaded.plane, rects);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    out.cache.patches.push_back(
        {picks[i].first, picks[i].second, encode_patch(blocks[i], loaded.plane.quant_table, options.clamp_t, options.pql)});
  }
  return out;
}

}  // namespace

ImageFeatures sampled_features(const DocumentRecord& record, const FeatureOptions& options) {
  const Bytes bytes = read_file_bytes(record.image_path);
  const auto loaded = load_dct_plane(bytes);
  std::vector<std::pair<PixelRect, PatchLabel>> picks;
  for (const auto& p : extract_patches(record, loaded.plane.width, loaded.plane.height, options.n_pristine, options.seed)) {
    picks.emplace_back(p.rect, p.label);
  }
  return encode_rects(loaded, picks, options);
}

ImageFeatures tiled_features(const DocumentRecord& record, const FeatureOptions& options) {
  const Bytes bytes = read_file_bytes(record.image_path);
  const auto loaded = load_dct_plane(bytes);
  std::vector<std::pair<PixelRect, PatchLabel>> picks;
  for (const auto& rect : tile_patch_rects(loaded.plane)) {
    const bool hit = std::any_of(record.regions.begin(), record.regions.end(),
                                 [&](const ForgedRegion& r) { return rects_intersect(rect, r); });
    picks.emplace_back(rect, hit ? PatchLabel::Forged : PatchLabel::Pristine);
  }
  return encode_rects(loaded, picks, options);
}

std::vector<PatchSample> patch_samples(const std::string& parent_id, const FeatureCache& cache) {
  std::vector<PatchSample> out;
  for (const auto& p : cache.patches) {
    out.push_back({parent_id, p.rect, p.label, SparseInput::from_tensor(p.tensor)});
  }
  return out;
}

std::filesystem::path feature_cache_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / (id + ".ohjf");
}

std::vector<ScoredSample> score_images(const CnnModel& model, const std::vector<DocumentRecord>& records,
                                       const FeatureOptions& options, AggregationMode mode, double threshold) {
  std::vector<ScoredSample> out;
  for (const auto& record : records) {
    const auto features = tiled_features(record, options);
    std::vector<PatchResult> patches;
    for (const auto& p : features.cache.patches) {
      const double score = model.forward(p.tensor).probability_forged;
      patches.push_back({score, score >= threshold});
    }
    out.push_back({record.id, aggregate_image_score(patches, mode, threshold).score, record.label});
  }
  return out;
}

SvmExperiment run_svm_experiment(const std::vector<DocumentRecord>& train, const std::vector<DocumentRecord>& test,
                                 const std::vector<GridCell>& grid, int folds, std::uint64_t seed) {
  std::vector<FeatureRow> rows;
  std::vector<int> labels;
  for (const auto& r : train) {
    rows.push_back(preprocess_pixels(read_file_bytes(r.image_path)));
    labels.push_back(r.label == Label::Forged ? 1 : -1);
  }
  SvmExperiment out;
  out.standardizer = standardize_fit(rows);
  for (auto& row : rows) row = standardize_apply(out.standardizer, row);
  out.search = grid_search(rows, labels, grid, folds, seed);
  auto options = options_for_cell(out.search.best, labels, rows.front().size());
  options.seed = seed;
  out.model = svm_train(rows, labels, options);
  for (const auto& r : test) {
    const auto row = standardize_apply(out.standardizer, preprocess_pixels(read_file_bytes(r.image_path)));
    out.test_scores.push_back({r.id, svm_predict(out.model, row).score, r.label});
  }
  return out;
}

std::vector<Prediction> direct_predictions(const std::string& model_id, const std::vector<ScoredSample>& scores) {
  std::vector<Prediction> out;
  const std::string now = utc_timestamp_now();
  for (const auto& s : scores) {
    Prediction p;
    p.model_id = model_id;
    p.document_id = s.id;
    p.truth = s.truth;
    p.score = s.score;
    p.parse_path = ParsePath::Direct;
    p.raw_response_digest = sha256_hex(std::string_view(fmt::format("{}", s.score)));
    p.timestamp = now;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<DocumentRecord> records_in_split(const std::vector<DocumentRecord>& records, Split split) {
  std::vector<DocumentRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out), [&](const auto& r) { return r.split == split; });
  return out;
}

}  // namespace forgebench

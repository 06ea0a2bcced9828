#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "forgebench/dataset.hpp"

namespace forgebench {

/// Prompt text with `{name}` placeholder slots. The version is a digest of the
/// text so every prediction can be tied to the exact wording it was given.
struct PromptTemplate {
  std::string text;

  std::string version() const;
  std::vector<std::string> placeholders() const;
};

/// The receipt fraud-detection prompt used for every zero-shot run. It has no
/// placeholders.
PromptTemplate default_prompt_template();

/// Categorical variant of the default prompt (asks for a label instead of a
/// number); `{style}` selects the answer vocabulary.
PromptTemplate categorical_prompt_template();

/// Throws MissingPlaceholder when a slot has no substitution.
std::string render_prompt(const PromptTemplate& prompt, const std::map<std::string, std::string>& substitutions = {});

enum class ParsePath { StructuredJson, RegexFallback, Unparseable, Refusal, Direct };

std::string_view parse_path_name(ParsePath path);
ParsePath parse_path_from_name(std::string_view name);

struct ParsedVerdict {
  std::optional<double> confidence;  // present iff StructuredJson / RegexFallback
  std::string evidence;
  std::string remaining_uncertainties;
  ParsePath parse_path = ParsePath::Unparseable;
};

/// Extraction order: first well-formed JSON object with a `confidence` key
/// (value must lie in [0, 1], otherwise Unparseable; never clamped), then a
/// case-insensitive `confidence[ level][:=] <0..1>` pattern, then the refusal
/// lexicon, else Unparseable.
ParsedVerdict parse_confidence(std::string_view raw);

bool looks_like_refusal(std::string_view text);

struct Attachment {
  std::string media_type;
  std::string base64;

  std::string data_url() const { return "data:" + media_type + ";base64," + base64; }
};

/// Media type sniffed from magic bytes (JPEG, PNG); throws UnknownMediaType
/// for empty or unrecognized input.
Attachment encode_image(std::span<const std::uint8_t> bytes);

enum class ProviderSchema { OpenAi, Anthropic, Gemini };

struct ProviderConfig {
  std::string name;      // display name, becomes the run's model id
  std::string endpoint;  // full URL; "{model}" is replaced by model_id
  std::string auth_env;  // environment variable holding the API key; empty = no auth
  std::string model_id;
  ProviderSchema schema = ProviderSchema::OpenAi;
  int max_in_flight = 4;
  int requests_per_minute = 60;
  int retry_max_attempts = 5;
  double retry_base_backoff = 1.0;  // seconds
  std::optional<int> reasoning_tokens;  // 0 disables thinking
  std::string ablation_group;  // pairs thinking / non-thinking runs in the ablation table
  double timeout_seconds = 120.0;

  /// Every field except secrets, for run records.
  std::map<std::string, std::string> describe() const;
};

/// key=value lines, '#' comments. Keys: name, endpoint, auth_env, model_id,
/// schema (openai|anthropic|gemini), max_in_flight, requests_per_minute,
/// retry_max_attempts, retry_base_backoff, reasoning_tokens, ablation_group,
/// timeout_seconds. Throws ConfigError.
ProviderConfig parse_provider_config(std::string_view text);

/// Canonical chat request: one user message carrying the prompt and the image.
struct ChatRequest {
  std::string system;  // optional
  std::string prompt;
  Attachment image;
  std::optional<int> reasoning_tokens;
};

/// Provider-agnostic chat-completions body:
///   {"model", "messages":[{"role":"system"?},{"role":"user","content":[
///     {"type":"text","text":...},{"type":"image_url","image_url":{"url":"data:..."}}]}],
///    "reasoning":{"max_tokens":N}?}
nlohmann::json canonical_body(const std::string& model_id, const ChatRequest& request);

/// Maps the canonical body onto the vendor schema selected by `config`.
nlohmann::json build_request_body(const ProviderConfig& config, const ChatRequest& request);

/// Pulls the assistant text out of a vendor response. Bodies that do not have
/// the expected shape are returned verbatim so the parser can classify them.
std::string extract_reply_text(ProviderSchema schema, const std::string& response_body);

/// Image digest carried by a canonical request body (SHA-256 of the decoded
/// attachment bytes); empty when the body has no image.
std::string request_image_digest(const nlohmann::json& canonical);

/// One model verdict on one document. The score is absent exactly when the
/// reply was a refusal or could not be parsed.
struct Prediction {
  std::string model_id;
  std::string document_id;
  Label truth = Label::Pristine;
  std::optional<double> score;
  ParsePath parse_path = ParsePath::Unparseable;
  std::string prompt_version;
  std::string raw_response_digest;  // SHA-256 of the raw reply text
  double latency_seconds = 0.0;
  std::string timestamp;  // UTC, ISO-8601

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

nlohmann::json prediction_to_json(const Prediction& prediction);
/// Throws CorruptRunFile when fields are missing or inconsistent.
Prediction prediction_from_json(const nlohmann::json& value);

struct OmissionCounts {
  std::size_t scored = 0;
  std::size_t unparseable = 0;
  std::size_t refusal = 0;

  std::size_t total() const { return scored + unparseable + refusal; }
};

OmissionCounts count_omissions(const std::vector<Prediction>& predictions);

std::string utc_timestamp_now();

}  // namespace forgebench

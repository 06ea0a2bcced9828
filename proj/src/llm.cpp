#include "forgebench/llm.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <ctime>
#include <regex>

#include <fmt/format.h>

#include "forgebench/error.hpp"
#include "forgebench/image_io.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

namespace {

constexpr const char* kDefaultPrompt = R"PROMPT(Task: Receipt Fraud Detection Analysis

Examine the provided receipt image carefully and perform a comprehensive fraud detection analysis. Determine if this receipt is legitimate or fraudulent.

Step 1: Systematic Visual Assessment
- Analyze the document layout, including alignment, spacing, and formatting consistency
- Examine text quality (font consistency, printing quality, resolution)
- Check for visual artifacts (smudges, unusual erasures, digital manipulation signs)
- Assess color consistency and transitions across the document

Step 2: Content Verification
- Verify date and time formatting consistency and logical sequence
- Examine merchant information (name, address, contact details) for completeness and consistency
- Analyze item descriptions, quantities, and pricing for logical coherence
- Verify mathematical accuracy (subtotals, taxes, discounts, final amounts)
- Check transaction identifiers (receipt numbers, transaction IDs) for proper formatting

Step 3: Contextual Evaluation
- Assess logical relationships between items purchased
- Check for reasonable pricing in relation to items purchased
- Verify time of purchase is appropriate for the merchant type
- Evaluate authenticity markers (barcodes, QR codes, watermarks, security features)

Step 4: Potential Fraud Indicators
- Identify inconsistencies in numerical values or calculations
- Detect misaligned text or irregular spacing patterns
- Note any unusual edits, erasures, or modifications
- Flag unrealistic purchases, prices, or merchant information

Conclusion:
Based on your analysis, provide a decisive determination of the question: Is this receipt fraudulent? 
1. confidence level 
2. List specific evidence supporting your determination.
3. Identify any remaining uncertainties or areas requiring further investigation.

State your confidence level from 0 to 1, 0 for not confident at all(it's legitimate), 1 for certainty (it's fraudulent).

Give your conclusion in json format:
{
    "confidence": float,
    "evidence": string,
    "remaining uncertainiies": string.
})PROMPT";

constexpr const char* kCategoricalPrompt = R"PROMPT(Task: Receipt Fraud Detection Analysis

Examine the provided receipt image carefully and decide whether it is legitimate or fraudulent.
Check layout and spacing, text and print quality, visual artifacts, arithmetic of totals and taxes,
merchant details, dates and transaction identifiers.

Give your conclusion in json format:
{
    "verdict": one of {style},
    "evidence": string,
    "remaining uncertainiies": string.
})PROMPT";

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls fn(begin, end, name) for each `{name}` slot, in order.
template <typename Fn>
void for_each_slot(const std::string& text, Fn&& fn) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' || i + 1 >= text.size() || !is_name_start(text[i + 1])) continue;
    std::size_t j = i + 1;
    while (j < text.size() && is_name_char(text[j])) ++j;
    if (j < text.size() && text[j] == '}') {
      fn(i, j + 1, text.substr(i + 1, j - i - 1));
      i = j;
    }
  }
}

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// End (exclusive) of the balanced {...} starting at `open`, honouring JSON
// string escapes; npos if the braces never balance.
std::size_t balanced_object_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::string field_text(const nlohmann::json& object, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    auto it = object.find(key);
    if (it == object.end()) continue;
    return it->is_string() ? it->get<std::string>() : it->dump();
  }
  return {};
}

}  // namespace

std::string PromptTemplate::version() const { return sha256_hex(std::string_view(text)); }

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  for_each_slot(text, [&](std::size_t, std::size_t, std::string name) { names.push_back(std::move(name)); });
  return names;
}

PromptTemplate default_prompt_template() { return {kDefaultPrompt}; }
PromptTemplate categorical_prompt_template() { return {kCategoricalPrompt}; }

std::string render_prompt(const PromptTemplate& prompt, const std::map<std::string, std::string>& substitutions) {
  std::string out;
  std::size_t copied = 0;
  for_each_slot(prompt.text, [&](std::size_t begin, std::size_t end, const std::string& name) {
    auto it = substitutions.find(name);
    if (it == substitutions.end()) throw Error(ErrorCode::MissingPlaceholder, "{" + name + "}");
    out.append(prompt.text, copied, begin - copied);
    out += it->second;
    copied = end;
  });
  out.append(prompt.text, copied);
  return out;
}

std::string_view parse_path_name(ParsePath path) {
  switch (path) {
    case ParsePath::StructuredJson: return "StructuredJson";
    case ParsePath::RegexFallback: return "RegexFallback";
    case ParsePath::Unparseable: return "Unparseable";
    case ParsePath::Refusal: return "Refusal";
    case ParsePath::Direct: return "Direct";
  }
  return "Unparseable";
}

ParsePath parse_path_from_name(std::string_view name) {
  for (auto p : {ParsePath::StructuredJson, ParsePath::RegexFallback, ParsePath::Unparseable, ParsePath::Refusal,
                 ParsePath::Direct}) {
    if (parse_path_name(p) == name) return p;
  }
  throw Error(ErrorCode::CorruptRunFile, "unknown parse path " + std::string(name));
}

bool looks_like_refusal(std::string_view text) {
  static const char* const kLexicon[] = {
      "cannot assist",     "can't assist",      "can not assist",   "unable to assist", "unable to analyze",
      "unable to analyse", "cannot analyze",    "can't analyze",    "cannot help with", "can't help with",
      "unable to help",    "cannot provide",    "can't provide",    "unable to provide", "not able to assist",
      "not able to help",  "won't be able to",  "i must decline",   "i have to decline", "cannot comply",
      "can't comply",      "against my guidelines",
  };
  std::string folded = lower(text);
  // Curly apostrophes show up in some replies.
  for (std::size_t pos; (pos = folded.find("\xE2\x80\x99")) != std::string::npos;) folded.replace(pos, 3, "'");
  return std::any_of(std::begin(kLexicon), std::end(kLexicon),
                     [&](const char* phrase) { return folded.find(phrase) != std::string::npos; });
}

ParsedVerdict parse_confidence(std::string_view raw) {
  ParsedVerdict verdict;

  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const std::size_t end = balanced_object_end(raw, open);
    if (end == std::string_view::npos) continue;
    const auto object = nlohmann::json::parse(raw.substr(open, end - open), nullptr, false);
    if (!object.is_object() || !object.contains("confidence")) continue;
    const auto& value = object["confidence"];
    verdict.evidence = field_text(object, {"evidence"});
    verdict.remaining_uncertainties =
        field_text(object, {"remaining uncertainiies", "remaining_uncertainties", "remaining uncertainties"});
    if (value.is_number()) {
      const double c = value.get<double>();
      if (c >= 0.0 && c <= 1.0) {
        verdict.confidence = c;
        verdict.parse_path = ParsePath::StructuredJson;
        return verdict;
      }
    }
    verdict.parse_path = ParsePath::Unparseable;
    return verdict;
  }

  static const std::regex kPattern(R"(confidence(?:[ _]level)?"?\s*[:=]?\s*(0(?:\.\d+)?|1(?:\.0+)?)(?![\d.]))",
                                   std::regex::ECMAScript | std::regex::icase);
  const std::string text(raw);
  std::smatch match;
  if (std::regex_search(text, match, kPattern)) {
    const std::string digits = match[1].str();
    double c = 0.0;
    std::from_chars(digits.data(), digits.data() + digits.size(), c);
    verdict.confidence = c;
    verdict.parse_path = ParsePath::RegexFallback;
    return verdict;
  }

  verdict.parse_path = looks_like_refusal(raw) ? ParsePath::Refusal : ParsePath::Unparseable;
  return verdict;
}

Attachment encode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::UnknownMediaType, "empty image payload");
  switch (sniff_media_type(bytes)) {
    case MediaType::Jpeg: return {"image/jpeg", base64_encode(bytes)};
    case MediaType::Png: return {"image/png", base64_encode(bytes)};
    case MediaType::Unknown: break;
  }
  throw Error(ErrorCode::UnknownMediaType, "unrecognized magic bytes");
}

namespace {

std::string_view schema_name(ProviderSchema schema) {
  switch (schema) {
    case ProviderSchema::OpenAi: return "openai";
    case ProviderSchema::Anthropic: return "anthropic";
    case ProviderSchema::Gemini: return "gemini";
  }
  return "openai";
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw Error(ErrorCode::ConfigError, key + ": not a number: " + value);
  return out;
}

}  // namespace

std::map<std::string, std::string> ProviderConfig::describe() const {
  std::map<std::string, std::string> out{
      {"name", name},
      {"endpoint", endpoint},
      {"auth_env", auth_env},
      {"model_id", model_id},
      {"schema", std::string(schema_name(schema))},
      {"max_in_flight", std::to_string(max_in_flight)},
      {"requests_per_minute", std::to_string(requests_per_minute)},
      {"retry_max_attempts", std::to_string(retry_max_attempts)},
      {"retry_base_backoff", fmt::format("{}", retry_base_backoff)},
      {"ablation_group", ablation_group},
      {"timeout_seconds", fmt::format("{}", timeout_seconds)},
  };
  if (reasoning_tokens) out["reasoning_tokens"] = std::to_string(*reasoning_tokens);
  return out;
}

ProviderConfig parse_provider_config(std::string_view text) {
  ProviderConfig config;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t stop = text.find('\n', start);
    if (stop == std::string_view::npos) stop = text.size();
    ++line_no;
    std::string line = trim(text.substr(start, stop - start));
    start = stop + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, fmt::format("line {}: expected key=value", line_no));
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "name") config.name = value;
    else if (key == "endpoint") config.endpoint = value;
    else if (key == "auth_env") config.auth_env = value;
    else if (key == "model_id") config.model_id = value;
    else if (key == "ablation_group") config.ablation_group = value;
    else if (key == "max_in_flight") config.max_in_flight = parse_number<int>(key, value);
    else if (key == "requests_per_minute") config.requests_per_minute = parse_number<int>(key, value);
    else if (key == "retry_max_attempts") config.retry_max_attempts = parse_number<int>(key, value);
    else if (key == "retry_base_backoff") config.retry_base_backoff = parse_number<double>(key, value);
    else if (key == "timeout_seconds") config.timeout_seconds = parse_number<double>(key, value);
    else if (key == "reasoning_tokens") config.reasoning_tokens = parse_number<int>(key, value);
    else if (key == "schema") {
      const auto v = lower(value);
      if (v == "openai") config.schema = ProviderSchema::OpenAi;
      else if (v == "anthropic") config.schema = ProviderSchema::Anthropic;
      else if (v == "gemini") config.schema = ProviderSchema::Gemini;
      else throw Error(ErrorCode::ConfigError, "unknown schema " + value);
    } else {
      throw Error(ErrorCode::ConfigError, fmt::format("line {}: unknown key {}", line_no, key));
    }
  }
  if (config.endpoint.empty()) throw Error(ErrorCode::ConfigError, "endpoint is required");
  if (config.model_id.empty()) throw Error(ErrorCode::ConfigError, "model_id is required");
  if (config.name.empty()) config.name = config.model_id;
  if (config.max_in_flight <= 0 || config.requests_per_minute <= 0 || config.retry_max_attempts <= 0 ||
      config.retry_base_backoff < 0 || config.timeout_seconds <= 0) {
    throw Error(ErrorCode::ConfigError, "concurrency, rate, attempts and timeout must be positive");
  }
  if (config.reasoning_tokens && *config.reasoning_tokens < 0) {
    throw Error(ErrorCode::ConfigError, "reasoning_tokens must be >= 0");
  }
  return config;
}

nlohmann::json canonical_body(const std::string& model_id, const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"},
                      {"content",
                       {{{"type", "text"}, {"text", request.prompt}},
                        {{"type", "image_url"}, {"image_url", {{"url", request.image.data_url()}}}}}}});
  nlohmann::json body{{"model", model_id}, {"messages", std::move(messages)}};
  if (request.reasoning_tokens) body["reasoning"] = {{"max_tokens", *request.reasoning_tokens}};
  return body;
}

nlohmann::json build_request_body(const ProviderConfig& config, const ChatRequest& request) {
  switch (config.schema) {
    case ProviderSchema::OpenAi: return canonical_body(config.model_id, request);
    case ProviderSchema::Anthropic: {
      const int budget = request.reasoning_tokens.value_or(0);
      nlohmann::json body{
          {"model", config.model_id},
          {"max_tokens", 4096 + budget},
          {"messages",
           {{{"role", "user"},
             {"content",
              {{{"type", "image"},
                {"source",
                 {{"type", "base64"}, {"media_type", request.image.media_type}, {"data", request.image.base64}}}},
               {{"type", "text"}, {"text", request.prompt}}}}}}},
      };
      if (!request.system.empty()) body["system"] = request.system;
      if (request.reasoning_tokens) {
        body["thinking"] = budget > 0 ? nlohmann::json{{"type", "enabled"}, {"budget_tokens", budget}}
                                      : nlohmann::json{{"type", "disabled"}};
      }
      return body;
    }
    case ProviderSchema::Gemini: {
      nlohmann::json body{
          {"contents",
           {{{"role", "user"},
             {"parts",
              {{{"text", request.prompt}},
               {{"inline_data", {{"mime_type", request.image.media_type}, {"data", request.image.base64}}}}}}}}},
      };
      if (!request.system.empty()) body["systemInstruction"] = {{"parts", {{{"text", request.system}}}}};
      if (request.reasoning_tokens) {
        body["generationConfig"] = {{"thinkingConfig", {{"thinkingBudget", *request.reasoning_tokens}}}};
      }
      return body;
    }
  }
  return canonical_body(config.model_id, request);
}

std::string extract_reply_text(ProviderSchema schema, const std::string& response_body) {
  const auto body = nlohmann::json::parse(response_body, nullptr, false);
  if (!body.is_object()) return response_body;
  std::string text;
  bool found = false;
  auto append_parts = [&](const nlohmann::json& parts, const char* skip_flag) {
    if (!parts.is_array()) return;
    for (const auto& part : parts) {
      if (!part.is_object() || !part.contains("text") || !part["text"].is_string()) continue;
      if (skip_flag && part.value(skip_flag, false)) continue;
      if (part.contains("type") && part["type"] != "text") continue;
      text += part["text"].get<std::string>();
      found = true;
    }
  };
  switch (schema) {
    case ProviderSchema::OpenAi: {
      const auto choices = body.find("choices");
      if (choices == body.end() || !choices->is_array() || choices->empty()) break;
      const auto& message = (*choices)[0].value("message", nlohmann::json::object());
      const auto content = message.find("content");
      if (content == message.end()) break;
      if (content->is_string()) return content->get<std::string>();
      append_parts(*content, nullptr);
      break;
    }
    case ProviderSchema::Anthropic:
      if (body.contains("content")) append_parts(body["content"], nullptr);
      break;
    case ProviderSchema::Gemini: {
      const auto candidates = body.find("candidates");
      if (candidates == body.end() || !candidates->is_array() || candidates->empty()) break;
      const auto& content = (*candidates)[0].value("content", nlohmann::json::object());
      if (content.contains("parts")) append_parts(content["parts"], "thought");
      break;
    }
  }
  return found ? text : response_body;
}

namespace {

const std::string* find_image_payload(const nlohmann::json& node, std::string& scratch) {
  if (node.is_string()) {
    const auto& s = node.get_ref<const std::string&>();
    const auto marker = s.find(";base64,");
    if (s.rfind("data:", 0) == 0 && marker != std::string::npos) {
      scratch = s.substr(marker + 8);
      return &scratch;
    }
    return nullptr;
  }
  if (node.is_object()) {
    for (const char* key : {"inline_data", "inlineData"}) {
      if (node.contains(key) && node[key].is_object() && node[key].contains("data") && node[key]["data"].is_string()) {
        return &node[key]["data"].get_ref<const std::string&>();
      }
    }
    if (node.value("type", "") == "base64" && node.contains("data") && node["data"].is_string()) {
      return &node["data"].get_ref<const std::string&>();
    }
  }
  if (node.is_object() || node.is_array()) {
    for (const auto& child : node) {
      if (const auto* hit = find_image_payload(child, scratch)) return hit;
    }
  }
  return nullptr;
}

}  // namespace

std::string request_image_digest(const nlohmann::json& body) {
  std::string scratch;
  const auto* payload = find_image_payload(body, scratch);
  if (!payload) return {};
  return sha256_hex(base64_decode(*payload));
}

nlohmann::json prediction_to_json(const Prediction& p) {
  nlohmann::json out{
      {"model_id", p.model_id},
      {"document_id", p.document_id},
      {"truth", std::string(label_name(p.truth))},
      {"score", p.score ? nlohmann::json(*p.score) : nlohmann::json(nullptr)},
      {"parse_path", std::string(parse_path_name(p.parse_path))},
      {"prompt_version", p.prompt_version},
      {"raw_response_digest", p.raw_response_digest},
      {"latency_seconds", p.latency_seconds},
      {"timestamp", p.timestamp},
  };
  return out;
}

Prediction prediction_from_json(const nlohmann::json& v) {
  Prediction p;
  try {
    p.model_id = v.at("model_id").get<std::string>();
    p.document_id = v.at("document_id").get<std::string>();
    p.truth = parse_label_token(v.at("truth").get<std::string>());
    if (!v.at("score").is_null()) p.score = v.at("score").get<double>();
    p.parse_path = parse_path_from_name(v.at("parse_path").get<std::string>());
    p.prompt_version = v.at("prompt_version").get<std::string>();
    p.raw_response_digest = v.at("raw_response_digest").get<std::string>();
    p.latency_seconds = v.at("latency_seconds").get<double>();
    p.timestamp = v.at("timestamp").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptRunFile, std::string("prediction: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptRunFile, std::string("prediction: ") + e.what());
  }
  const bool omitted = p.parse_path == ParsePath::Unparseable || p.parse_path == ParsePath::Refusal;
  if (omitted == p.score.has_value()) throw Error(ErrorCode::CorruptRunFile, "score presence disagrees with parse path");
  if (p.score && !(*p.score >= 0.0 && *p.score <= 1.0)) throw Error(ErrorCode::CorruptRunFile, "score outside [0, 1]");
  return p;
}

OmissionCounts count_omissions(const std::vector<Prediction>& predictions) {
  OmissionCounts counts;
  for (const auto& p : predictions) {
    if (p.parse_path == ParsePath::Refusal) ++counts.refusal;
    else if (p.parse_path == ParsePath::Unparseable) ++counts.unparseable;
    else ++counts.scored;
  }
  return counts;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace forgebench

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "forgebench/dataset.hpp"
#include "forgebench/llm.hpp"

namespace forgebench {

/// Time source for rate limiting and backoff; tests swap in a fake one.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;  // seconds, monotonic
  virtual void sleep_for(double seconds) = 0;
};

class SystemClock final : public Clock {
 public:
  double now() override;
  void sleep_for(double seconds) override;
};

/// Advances only when slept on. Thread-safe.
class ManualClock final : public Clock {
 public:
  double now() override;
  void sleep_for(double seconds) override;

 private:
  std::mutex mutex_;
  double now_ = 0.0;
};

/// Sliding-window log: at most `per_minute` acquisitions in any half-open
/// 60-second interval.
class RateLimiter {
 public:
  RateLimiter(int per_minute, std::shared_ptr<Clock> clock);

  /// Blocks until a slot is free; returns the time the slot was taken.
  double acquire();

 private:
  int per_minute_;
  std::shared_ptr<Clock> clock_;
  std::mutex mutex_;
  std::deque<double> taken_;
};

struct AttemptRecord {
  std::string tag;  // caller-supplied, usually the document id
  int attempt = 0;  // 1-based
  double started = 0.0;
  double finished = 0.0;
  int status = 0;  // HTTP status, 0 for transport failures
  std::string outcome;  // ok | retry | auth | fatal | exhausted
};

/// True when `attempts` never exceed `per_minute` within any half-open
/// 60-second interval.
bool rate_conforms(const std::vector<AttemptRecord>& attempts, int per_minute);

struct HttpReply {
  int status = 0;  // 0 = transport failure (refused, timeout, ...)
  std::string body;
  std::string error;
};

/// Delivers a JSON body to the provider; swapped out in tests.
using Transport = std::function<HttpReply(const ProviderConfig&, const std::string& body)>;

/// httplib-backed transport honouring the config's endpoint, auth header and timeout.
HttpReply http_post(const ProviderConfig& config, const std::string& body);

/// Resolves the API key named by config.auth_env (empty when none is named).
/// Throws AuthError when the variable is unset.
std::string resolve_secret(const ProviderConfig& config);

class ProviderClient {
 public:
  explicit ProviderClient(ProviderConfig config, std::shared_ptr<Clock> clock = std::make_shared<SystemClock>(),
                          std::uint64_t jitter_seed = 0, Transport transport = http_post);

  const ProviderConfig& config() const { return config_; }

  /// Sends one chat request and returns the assistant text. Retries 429, 408,
  /// 5xx and transport failures with delay base * 2^(k-1) * (1 + U[0,1)) after
  /// attempt k. Throws AuthError (401/403), NonRetryableStatus (other
  /// statuses) or ExhaustedRetries.
  std::string send_request(const std::string& prompt, const Attachment& image, const std::string& tag = "");

  std::vector<AttemptRecord> attempts() const;
  std::size_t max_observed_in_flight() const;

 private:
  double backoff_delay(int attempt);

  ProviderConfig config_;
  std::shared_ptr<Clock> clock_;
  Transport transport_;
  RateLimiter limiter_;

  mutable std::mutex mutex_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
  std::size_t max_in_flight_seen_ = 0;
  std::mt19937_64 jitter_;
  std::vector<AttemptRecord> attempts_;
};

/// Content-addressed reply store:
///   <dir>/responses/<key>.txt   raw assistant text
///   <dir>/predictions.jsonl     {"key": ..., "prediction": {...}} per line
/// Readers share a lock; writers are serialized.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static std::string key(const std::string& model_id, const std::string& prompt_version,
                         const std::string& image_digest, std::optional<int> reasoning_tokens);

  std::optional<Prediction> lookup(const std::string& key) const;
  std::optional<std::string> raw_response(const std::string& key) const;
  void store(const std::string& key, const std::string& raw_response, const Prediction& prediction);
  std::size_t size() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Prediction> index_;
};

/// FORGEBENCH_CACHE_DIR if set, else `fallback`.
std::filesystem::path default_cache_dir(const std::filesystem::path& fallback);

/// Cache hit skips the network; a miss renders, encodes, sends, parses and
/// stores the raw reply with its Prediction. Parse failures yield a
/// score-absent Prediction; transport errors propagate.
Prediction evaluate_document(ProviderClient& client, const DocumentRecord& record, const PromptTemplate& prompt,
                             ResponseCache& cache);

/// Runs evaluate_document over `records` with up to config.max_in_flight
/// workers. Output order follows `records`. The first error stops dispatch and
/// is rethrown once running requests finish.
std::vector<Prediction> evaluate_documents(ProviderClient& client, const std::vector<DocumentRecord>& records,
                                           const PromptTemplate& prompt, ResponseCache& cache);

struct MockResponse {
  int status = 200;
  std::string content;              // assistant text, wrapped in the provider schema
  std::optional<std::string> body;  // sent verbatim instead when present
  double delay_seconds = 0.0;
};

/// image digest (SHA-256 of the image bytes, or "*" for any) -> scripted
/// replies, consumed in order with the last one repeating.
using MockScript = std::map<std::string, std::vector<MockResponse>>;

/// JSONL, one entry per line:
///   {"digest": "<sha256>|*", "responses": [{"status": 200, "content": "..."}, ...]}
MockScript parse_mock_transcript(std::string_view text);
MockScript load_mock_transcript(const std::filesystem::path& path);

struct MockRequest {
  std::string digest;
  int status = 0;
};

/// Local HTTP stub answering chat requests from a script. Requests whose image
/// digest has no entry (and no "*" entry) get 404.
class MockProvider {
 public:
  explicit MockProvider(MockScript script, ProviderSchema schema = ProviderSchema::OpenAi);
  ~MockProvider();
  MockProvider(const MockProvider&) = delete;
  MockProvider& operator=(const MockProvider&) = delete;

  int port() const;
  std::string endpoint() const;  // http://127.0.0.1:<port>/v1/chat/completions
  std::vector<MockRequest> requests() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Wraps assistant text in a minimal success body for `schema`.
std::string mock_reply_body(ProviderSchema schema, const std::string& content);

}  // namespace forgebench

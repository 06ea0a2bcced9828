#include "forgebench/llm_client.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>

#include <fmt/format.h>
#include <httplib.h>

#include "forgebench/error.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

double SystemClock::now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_for(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double ManualClock::now() {
  std::lock_guard lock(mutex_);
  return now_;
}

void ManualClock::sleep_for(double seconds) {
  std::lock_guard lock(mutex_);
  if (seconds > 0) now_ += seconds;
}

RateLimiter::RateLimiter(int per_minute, std::shared_ptr<Clock> clock)
    : per_minute_(per_minute), clock_(std::move(clock)) {
  if (per_minute_ <= 0) throw Error(ErrorCode::ConfigError, "requests_per_minute must be positive");
}

double RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    const double now = clock_->now();
    while (!taken_.empty() && now - taken_.front() >= 60.0) taken_.pop_front();
    if (static_cast<int>(taken_.size()) < per_minute_) {
      taken_.push_back(now);
      return now;
    }
    const double wait = taken_.front() + 60.0 - now;
    lock.unlock();
    clock_->sleep_for(wait);
    lock.lock();
  }
}

bool rate_conforms(const std::vector<AttemptRecord>& attempts, int per_minute) {
  std::vector<double> starts;
  for (const auto& a : attempts) starts.push_back(a.started);
  std::sort(starts.begin(), starts.end());
  std::size_t lo = 0;
  for (std::size_t hi = 0; hi < starts.size(); ++hi) {
    while (starts[hi] - starts[lo] >= 60.0) ++lo;
    if (static_cast<int>(hi - lo + 1) > per_minute) return false;
  }
  return true;
}

std::string resolve_secret(const ProviderConfig& config) {
  if (config.auth_env.empty()) return {};
  const char* value = std::getenv(config.auth_env.c_str());
  if (!value || !*value) throw Error(ErrorCode::AuthError, "environment variable " + config.auth_env + " is not set");
  return value;
}

namespace {

std::string endpoint_url(const ProviderConfig& config) {
  std::string url = config.endpoint;
  for (std::size_t pos; (pos = url.find("{model}")) != std::string::npos;) url.replace(pos, 7, config.model_id);
  return url;
}

}  // namespace

HttpReply http_post(const ProviderConfig& config, const std::string& body) {
  const std::string url = endpoint_url(config);
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigError, "endpoint is not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Headers headers;
  const std::string secret = resolve_secret(config);
  if (!secret.empty()) {
    switch (config.schema) {
      case ProviderSchema::OpenAi: headers.emplace("Authorization", "Bearer " + secret); break;
      case ProviderSchema::Anthropic: headers.emplace("x-api-key", secret); break;
      case ProviderSchema::Gemini: headers.emplace("x-goog-api-key", secret); break;
    }
  }
  if (config.schema == ProviderSchema::Anthropic) headers.emplace("anthropic-version", "2023-06-01");

  httplib::Client client(origin);
  const auto timeout = std::chrono::duration<double>(config.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  auto result = client.Post(path, headers, body, "application/json");
  if (!result) return {0, {}, httplib::to_string(result.error())};
  return {result->status, result->body, {}};
}

ProviderClient::ProviderClient(ProviderConfig config, std::shared_ptr<Clock> clock, std::uint64_t jitter_seed,
                               Transport transport)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      transport_(std::move(transport)),
      limiter_(config_.requests_per_minute, clock_),
      jitter_(jitter_seed) {
  if (config_.max_in_flight <= 0) throw Error(ErrorCode::ConfigError, "max_in_flight must be positive");
  if (config_.retry_max_attempts <= 0) throw Error(ErrorCode::ConfigError, "retry_max_attempts must be positive");
}

double ProviderClient::backoff_delay(int attempt) {
  std::lock_guard lock(mutex_);
  return config_.retry_base_backoff * std::ldexp(1.0, attempt - 1) * (1.0 + uniform_unit(jitter_));
}

std::string ProviderClient::send_request(const std::string& prompt, const Attachment& image, const std::string& tag) {
  ChatRequest request{{}, prompt, image, config_.reasoning_tokens};
  const std::string body = build_request_body(config_, request).dump();

  for (int attempt = 1;; ++attempt) {
    AttemptRecord record;
    record.tag = tag;
    record.attempt = attempt;
    HttpReply reply;
    {
      std::unique_lock lock(mutex_);
      slot_free_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
      ++in_flight_;
      max_in_flight_seen_ = std::max(max_in_flight_seen_, static_cast<std::size_t>(in_flight_));
    }
    try {
      record.started = limiter_.acquire();
      reply = transport_(config_, body);
    } catch (...) {
      std::lock_guard lock(mutex_);
      --in_flight_;
      slot_free_.notify_one();
      throw;
    }
    record.finished = clock_->now();
    record.status = reply.status;
    {
      std::lock_guard lock(mutex_);
      --in_flight_;
      slot_free_.notify_one();
    }

    const int s = reply.status;
    const bool ok = s >= 200 && s < 300;
    const bool auth = s == 401 || s == 403;
    const bool retryable = s == 0 || s == 408 || s == 429 || s >= 500;
    record.outcome = ok ? "ok" : auth ? "auth" : !retryable ? "fatal" : attempt >= config_.retry_max_attempts ? "exhausted" : "retry";
    {
      std::lock_guard lock(mutex_);
      attempts_.push_back(record);
    }
    if (ok) return extract_reply_text(config_.schema, reply.body);
    if (auth) throw Error(ErrorCode::AuthError, fmt::format("{} returned {}", config_.name, s));
    if (!retryable) throw Error(ErrorCode::NonRetryableStatus, fmt::format("{} returned {}", config_.name, s));
    if (attempt >= config_.retry_max_attempts) {
      throw Error(ErrorCode::ExhaustedRetries,
                  fmt::format("{}: {} attempts, last status {} {}", tag, attempt, s, reply.error));
    }
    clock_->sleep_for(backoff_delay(attempt));
  }
}

std::vector<AttemptRecord> ProviderClient::attempts() const {
  std::lock_guard lock(mutex_);
  return attempts_;
}

std::size_t ProviderClient::max_observed_in_flight() const {
  std::lock_guard lock(mutex_);
  return max_in_flight_seen_;
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_ / "responses");
  const auto index_path = dir_ / "predictions.jsonl";
  if (!std::filesystem::exists(index_path)) return;
  std::ifstream in(index_path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto entry = nlohmann::json::parse(line, nullptr, false);
    if (!entry.is_object() || !entry.contains("key") || !entry.contains("prediction")) {
      throw Error(ErrorCode::CorruptRunFile, fmt::format("{}:{}: bad cache entry", index_path.string(), line_no));
    }
    index_[entry["key"].get<std::string>()] = prediction_from_json(entry["prediction"]);
  }
}

std::string ResponseCache::key(const std::string& model_id, const std::string& prompt_version,
                               const std::string& image_digest, std::optional<int> reasoning_tokens) {
  const std::string material = fmt::format("{}\n{}\n{}\n{}", model_id, prompt_version, image_digest,
                                           reasoning_tokens ? std::to_string(*reasoning_tokens) : "none");
  return sha256_hex(std::string_view(material));
}

std::optional<Prediction> ResponseCache::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> ResponseCache::raw_response(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto path = dir_ / "responses" / (key + ".txt");
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_file_text(path);
}

void ResponseCache::store(const std::string& key, const std::string& raw, const Prediction& prediction) {
  std::unique_lock lock(mutex_);
  write_file_atomic(dir_ / "responses" / (key + ".txt"), raw);
  std::ofstream out(dir_ / "predictions.jsonl", std::ios::app);
  out << nlohmann::json{{"key", key}, {"prediction", prediction_to_json(prediction)}}.dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "cannot append to cache index in " + dir_.string());
  index_[key] = prediction;
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return index_.size();
}

std::filesystem::path default_cache_dir(const std::filesystem::path& fallback) {
  const char* env = std::getenv("FORGEBENCH_CACHE_DIR");
  return env && *env ? std::filesystem::path(env) : fallback;
}

Prediction evaluate_document(ProviderClient& client, const DocumentRecord& record, const PromptTemplate& prompt,
                             ResponseCache& cache) {
  const auto& config = client.config();
  const Bytes bytes = read_file_bytes(record.image_path);
  const std::string version = prompt.version();
  const std::string key = ResponseCache::key(config.model_id, version, sha256_hex(bytes), config.reasoning_tokens);
  if (auto hit = cache.lookup(key)) {
    // Identical images under different ids share the reply.
    hit->document_id = record.id;
    hit->truth = record.label;
    return *hit;
  }

  const std::string text = render_prompt(prompt);
  const Attachment image = encode_image(bytes);
  auto clock = SystemClock();
  const double started = clock.now();
  const std::string raw = client.send_request(text, image, record.id);
  const double latency = clock.now() - started;
  const ParsedVerdict verdict = parse_confidence(raw);

  Prediction p;
  p.model_id = config.name;
  p.document_id = record.id;
  p.truth = record.label;
  p.score = verdict.confidence;
  p.parse_path = verdict.parse_path;
  p.prompt_version = version;
  p.raw_response_digest = sha256_hex(std::string_view(raw));
  p.latency_seconds = latency;
  p.timestamp = utc_timestamp_now();
  cache.store(key, raw, p);
  return p;
}

std::vector<Prediction> evaluate_documents(ProviderClient& client, const std::vector<DocumentRecord>& records,
                                           const PromptTemplate& prompt, ResponseCache& cache) {
  std::vector<Prediction> out(records.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= records.size()) return;
      try {
        out[i] = evaluate_document(client, records[i], prompt, cache);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(records.size(), static_cast<std::size_t>(client.config().max_in_flight));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

MockScript parse_mock_transcript(std::string_view text) {
  MockScript script;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t stop = text.find('\n', start);
    if (stop == std::string_view::npos) stop = text.size();
    ++line_no;
    const std::string line = trim(text.substr(start, stop - start));
    start = stop + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto entry = nlohmann::json::parse(line, nullptr, false);
    auto bad = [&](const char* what) { return Error(ErrorCode::ConfigError, fmt::format("transcript line {}: {}", line_no, what)); };
    if (!entry.is_object() || !entry.contains("digest") || !entry["digest"].is_string()) throw bad("missing digest");
    if (!entry.contains("responses") || !entry["responses"].is_array() || entry["responses"].empty()) {
      throw bad("responses must be a non-empty array");
    }
    auto& list = script[entry["digest"].get<std::string>()];
    for (const auto& r : entry["responses"]) {
      if (!r.is_object()) throw bad("response must be an object");
      MockResponse response;
      response.status = r.value("status", 200);
      response.content = r.value("content", std::string{});
      if (r.contains("body")) response.body = r["body"].is_string() ? r["body"].get<std::string>() : r["body"].dump();
      response.delay_seconds = r.value("delay_seconds", 0.0);
      list.push_back(std::move(response));
    }
  }
  return script;
}

MockScript load_mock_transcript(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::ConfigError, "no transcript at " + path.string());
  return parse_mock_transcript(read_file_text(path));
}

std::string mock_reply_body(ProviderSchema schema, const std::string& content) {
  switch (schema) {
    case ProviderSchema::OpenAi:
      return nlohmann::json{{"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}}
          .dump();
    case ProviderSchema::Anthropic:
      return nlohmann::json{{"role", "assistant"}, {"content", {{{"type", "text"}, {"text", content}}}}}.dump();
    case ProviderSchema::Gemini:
      return nlohmann::json{{"candidates", {{{"content", {{"role", "model"}, {"parts", {{{"text", content}}}}}}}}}}
          .dump();
  }
  return {};
}

struct MockProvider::Impl {
  MockScript script;
  ProviderSchema schema;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  mutable std::mutex mutex;
  std::map<std::string, std::size_t> served;
  std::vector<MockRequest> log;
};

MockProvider::MockProvider(MockScript script, ProviderSchema schema) : impl_(std::make_unique<Impl>()) {
  impl_->script = std::move(script);
  impl_->schema = schema;
  Impl* impl = impl_.get();
  impl->server.Post(".*", [impl](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    const std::string digest = body.is_discarded() ? std::string{} : request_image_digest(body);
    MockResponse response{404, {}, std::string(R"({"error":"no scripted response"})"), 0.0};
    {
      std::lock_guard lock(impl->mutex);
      auto it = impl->script.find(digest);
      if (it == impl->script.end()) it = impl->script.find("*");
      if (it != impl->script.end()) {
        const std::size_t n = impl->served[it->first]++;
        response = it->second[std::min(n, it->second.size() - 1)];
      }
      impl->log.push_back({digest, response.status});
    }
    if (response.delay_seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(response.delay_seconds));
    res.status = response.status;
    res.set_content(response.body ? *response.body : mock_reply_body(impl->schema, response.content),
                    "application/json");
  });
  impl->port = impl->server.bind_to_any_port("127.0.0.1");
  if (impl->port <= 0) throw Error(ErrorCode::TransportError, "mock provider could not bind a port");
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

MockProvider::~MockProvider() { stop(); }

void MockProvider::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int MockProvider::port() const { return impl_->port; }

std::string MockProvider::endpoint() const {
  return fmt::format("http://127.0.0.1:{}/v1/chat/completions", impl_->port);
}

std::vector<MockRequest> MockProvider::requests() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->log;
}

}  // namespace forgebench

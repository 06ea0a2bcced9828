#include <doctest.h>

#include <atomic>
#include <fmt/format.h>

#include "forgebench/error.hpp"
#include "forgebench/image_io.hpp"
#include "forgebench/llm_client.hpp"
#include "forgebench/util.hpp"
#include "oracles.hpp"

using namespace forgebench;

namespace {

ProviderConfig test_config(int rpm = 600) {
  ProviderConfig c;
  c.name = "Mock-Model";
  c.endpoint = "http://unused";
  c.model_id = "mock-1";
  c.requests_per_minute = rpm;
  c.retry_base_backoff = 1.0;
  return c;
}

HttpReply ok_reply(const std::string& text) { return {200, mock_reply_body(ProviderSchema::OpenAi, text), ""}; }

std::vector<DocumentRecord> write_documents(const std::filesystem::path& dir, int n) {
  std::vector<DocumentRecord> out;
  for (int i = 0; i < n; ++i) {
    DocumentRecord r;
    r.id = fmt::format("doc{:03}", i);
    r.label = i % 3 == 0 ? Label::Forged : Label::Pristine;
    r.image_path = dir / (r.id + ".jpg");
    const auto bytes = encode_jpeg(oracle::textured_image(8, 8, static_cast<std::uint64_t>(i)));
    write_file_atomic(r.image_path, std::string(bytes.begin(), bytes.end()));
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("manual clock advances only on sleep") {
  ManualClock clock;
  CHECK(clock.now() == 0.0);
  clock.sleep_for(2.5);
  CHECK(clock.now() == 2.5);
}

TEST_CASE("rate limiter keeps every 60 s window under the limit") {
  auto clock = std::make_shared<ManualClock>();
  RateLimiter limiter(5, clock);
  std::vector<AttemptRecord> taken;
  for (int i = 0; i < 23; ++i) {
    AttemptRecord r;
    r.started = limiter.acquire();
    taken.push_back(r);
    clock->sleep_for(1.0);
  }
  CHECK(rate_conforms(taken, 5));
  CHECK_FALSE(rate_conforms(taken, 4));
  CHECK(taken[5].started >= taken[0].started + 60.0);
}

TEST_CASE("successful request") {
  auto clock = std::make_shared<ManualClock>();
  ProviderClient client(test_config(), clock, 1, [](const ProviderConfig&, const std::string&) {
    return ok_reply(R"({"confidence": 0.3})");
  });
  CHECK(client.send_request("p", {"image/jpeg", "AAAA"}, "t") == R"({"confidence": 0.3})");
  REQUIRE(client.attempts().size() == 1);
  CHECK(client.attempts()[0].outcome == "ok");
}

TEST_CASE("429 then 200 backs off at least the base delay") {
  auto clock = std::make_shared<ManualClock>();
  int calls = 0;
  ProviderClient client(test_config(), clock, 2, [&](const ProviderConfig&, const std::string&) {
    return ++calls == 1 ? HttpReply{429, "slow down", ""} : ok_reply("done");
  });
  CHECK(client.send_request("p", {"image/jpeg", "AAAA"}) == "done");
  const auto a = client.attempts();
  REQUIRE(a.size() == 2);
  CHECK(a[0].outcome == "retry");
  CHECK(a[1].started - a[0].finished >= 1.0);
  CHECK(a[1].started - a[0].finished < 2.0);
}

TEST_CASE("backoff doubles per attempt and exhausts") {
  auto clock = std::make_shared<ManualClock>();
  auto config = test_config();
  config.retry_max_attempts = 4;
  config.retry_base_backoff = 0.5;
  ProviderClient client(config, clock, 3, [](const ProviderConfig&, const std::string&) {
    return HttpReply{503, "", ""};
  });
  CHECK_THROWS_AS(client.send_request("p", {"image/jpeg", "AAAA"}), Error);
  const auto a = client.attempts();
  REQUIRE(a.size() == 4);
  for (std::size_t k = 1; k < a.size(); ++k) {
    const double gap = a[k].started - a[k - 1].finished;
    const double base = 0.5 * std::pow(2.0, static_cast<double>(k - 1));
    CHECK(gap >= base);
    CHECK(gap < 2 * base);
  }
  CHECK(a.back().outcome == "exhausted");
}

TEST_CASE("status classes") {
  auto clock = std::make_shared<ManualClock>();
  auto expect = [&](int status, ErrorCode code) {
    ProviderClient client(test_config(), clock, 0, [=](const ProviderConfig&, const std::string&) {
      return HttpReply{status, "", ""};
    });
    try {
      client.send_request("p", {"image/jpeg", "AAAA"});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
    return client.attempts().size();
  };
  CHECK(expect(401, ErrorCode::AuthError) == 1);
  CHECK(expect(403, ErrorCode::AuthError) == 1);
  CHECK(expect(400, ErrorCode::NonRetryableStatus) == 1);
  CHECK(expect(0, ErrorCode::ExhaustedRetries) == 5);
  CHECK(expect(408, ErrorCode::ExhaustedRetries) == 5);
}

TEST_CASE("secrets come from the environment") {
  auto c = test_config();
  c.auth_env = "FORGEBENCH_UNSET_KEY_FOR_TEST";
  ::unsetenv(c.auth_env.c_str());
  CHECK_THROWS_AS(resolve_secret(c), Error);
  ::setenv(c.auth_env.c_str(), "k", 1);
  CHECK(resolve_secret(c) == "k");
  ::unsetenv(c.auth_env.c_str());
  c.auth_env.clear();
  CHECK(resolve_secret(c).empty());
}

TEST_CASE("cache hit skips the network") {
  oracle::TempDir dir("cache");
  const auto docs = write_documents(dir.path(), 3);
  auto clock = std::make_shared<ManualClock>();
  std::atomic<int> calls{0};
  auto transport = [&](const ProviderConfig&, const std::string&) {
    ++calls;
    return ok_reply(R"({"confidence": 0.6})");
  };
  const auto prompt = default_prompt_template();
  {
    ResponseCache cache(dir.path() / "cache");
    ProviderClient client(test_config(), clock, 0, transport);
    const auto p = evaluate_document(client, docs[0], prompt, cache);
    CHECK(p.score == 0.6);
    CHECK(p.model_id == "Mock-Model");
    CHECK(p.prompt_version == prompt.version());
    CHECK(p.raw_response_digest == sha256_hex(std::string_view(R"({"confidence": 0.6})")));
    CHECK(cache.size() == 1);
  }
  ResponseCache reopened(dir.path() / "cache");
  CHECK(reopened.size() == 1);
  ProviderClient client(test_config(), clock, 0, transport);
  const auto again = evaluate_document(client, docs[0], prompt, reopened);
  CHECK(client.attempts().empty());
  CHECK(calls == 1);
  CHECK(again.score == 0.6);
  const auto key = ResponseCache::key("mock-1", prompt.version(), sha256_hex(read_file_bytes(docs[0].image_path)),
                                      std::nullopt);
  CHECK(reopened.raw_response(key) == std::string(R"({"confidence": 0.6})"));
  CHECK(ResponseCache::key("mock-1", "v", "d", 0) != ResponseCache::key("mock-1", "v", "d", std::nullopt));
}

TEST_CASE("cache directory override") {
  ::setenv("FORGEBENCH_CACHE_DIR", "/tmp/elsewhere", 1);
  CHECK(default_cache_dir("work/cache") == "/tmp/elsewhere");
  ::unsetenv("FORGEBENCH_CACHE_DIR");
  CHECK(default_cache_dir("work/cache") == "work/cache");
}

TEST_CASE("concurrent evaluation accounts for every record") {
  oracle::TempDir dir("many");
  const auto docs = write_documents(dir.path(), 218);
  std::map<std::string, std::string> reply_for;
  std::size_t expect_scored = 0, expect_refusal = 0, expect_unparseable = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto digest = sha256_hex(read_file_bytes(docs[i].image_path));
    if (i % 11 == 5) {
      reply_for[digest] = "I cannot assist with that.";
      ++expect_refusal;
    } else if (i % 13 == 7) {
      reply_for[digest] = "no idea";
      ++expect_unparseable;
    } else {
      reply_for[digest] = fmt::format(R"({{"confidence": {}}})", static_cast<double>(i % 100) / 100.0);
      ++expect_scored;
    }
  }
  auto clock = std::make_shared<ManualClock>();
  auto config = test_config(120);
  config.max_in_flight = 4;
  ProviderClient client(config, clock, 5, [&](const ProviderConfig&, const std::string& body) {
    const auto digest = request_image_digest(nlohmann::json::parse(body));
    return ok_reply(reply_for.at(digest));
  });
  ResponseCache cache(dir.path() / "cache");
  const auto preds = evaluate_documents(client, docs, default_prompt_template(), cache);
  REQUIRE(preds.size() == 218);
  for (std::size_t i = 0; i < docs.size(); ++i) CHECK(preds[i].document_id == docs[i].id);
  const auto counts = count_omissions(preds);
  CHECK(counts.total() == 218);
  CHECK(counts.scored == expect_scored);
  CHECK(counts.refusal == expect_refusal);
  CHECK(counts.unparseable == expect_unparseable);
  CHECK(client.max_observed_in_flight() <= 4);
  CHECK(rate_conforms(client.attempts(), 120));
  CHECK(cache.size() == 218);
}

TEST_CASE("first error stops evaluation") {
  oracle::TempDir dir("fail");
  const auto docs = write_documents(dir.path(), 6);
  auto clock = std::make_shared<ManualClock>();
  ProviderClient client(test_config(), clock, 0, [](const ProviderConfig&, const std::string&) {
    return HttpReply{401, "", ""};
  });
  ResponseCache cache(dir.path() / "cache");
  CHECK_THROWS_AS(evaluate_documents(client, docs, default_prompt_template(), cache), Error);
  CHECK(cache.size() == 0);
}

TEST_CASE("mock provider replays a transcript over HTTP") {
  oracle::TempDir dir("mock");
  const auto docs = write_documents(dir.path(), 2);
  const auto d0 = sha256_hex(read_file_bytes(docs[0].image_path));
  const auto script = parse_mock_transcript(
      fmt::format("{{\"digest\": \"{}\", \"responses\": [{{\"status\": 429}}, {{\"content\": \"confidence: 0.4\"}}]}}\n",
                  d0));
  MockProvider mock(script);
  auto config = test_config();
  config.endpoint = mock.endpoint();
  config.retry_base_backoff = 0.01;
  ProviderClient client(config);
  ResponseCache cache(dir.path() / "cache");
  const auto p = evaluate_document(client, docs[0], default_prompt_template(), cache);
  CHECK(p.parse_path == ParsePath::RegexFallback);
  CHECK(p.score == 0.4);
  CHECK_THROWS_AS(evaluate_document(client, docs[1], default_prompt_template(), cache), Error);
  const auto requests = mock.requests();
  REQUIRE(requests.size() == 3);
  CHECK(requests[0].status == 429);
  CHECK(requests[1].status == 200);
  CHECK(requests[2].status == 404);
  mock.stop();
  CHECK_THROWS_AS(parse_mock_transcript("{\"responses\": []}\n"), Error);
}

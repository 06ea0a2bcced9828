#include <doctest.h>

#include "forgebench/error.hpp"
#include "forgebench/image_io.hpp"
#include "forgebench/llm.hpp"
#include "forgebench/util.hpp"
#include "oracles.hpp"
#include "parser_corpus.hpp"

using namespace forgebench;

TEST_CASE("default prompt is byte-identical to the golden fixture") {
  const auto golden = read_file_text(oracle::fixture_dir() / "default_prompt.txt");
  const auto prompt = default_prompt_template();
  CHECK(prompt.text == golden);
  CHECK(prompt.placeholders().empty());
  CHECK(render_prompt(prompt) == golden);
  CHECK(prompt.version() == sha256_hex(std::string_view(golden)));
}

TEST_CASE("placeholders") {
  const PromptTemplate t{"Answer with {style}. JSON like {\"confidence\": x} stays. {style} again, {other}."};
  CHECK(t.placeholders() == std::vector<std::string>{"style", "style", "other"});
  CHECK(render_prompt(t, {{"style", "A"}, {"other", "B"}}) == "Answer with A. JSON like {\"confidence\": x} stays. A again, B.");
  CHECK_THROWS_AS(render_prompt(t, {{"style", "A"}}), Error);
  const auto cat = categorical_prompt_template();
  CHECK(cat.placeholders() == std::vector<std::string>{"style"});
  CHECK(cat.version() != default_prompt_template().version());
}

TEST_CASE("well-formed corpus parses as structured JSON") {
  for (const auto& reply : oracle::well_formed_replies()) {
    CAPTURE(reply.text);
    const auto v = parse_confidence(reply.text);
    CHECK(v.parse_path == ParsePath::StructuredJson);
    REQUIRE(v.confidence);
    CHECK(*v.confidence == *reply.expected_confidence);
    CHECK_FALSE(v.evidence.empty());
  }
}

TEST_CASE("malformed corpus classification") {
  for (const auto& reply : oracle::malformed_replies()) {
    CAPTURE(reply.text);
    const auto v = parse_confidence(reply.text);
    CHECK(parse_path_name(v.parse_path) == parse_path_name(reply.expected_path));
    CHECK(v.confidence == reply.expected_confidence);
  }
}

TEST_CASE("first object with a confidence key wins") {
  const auto v = parse_confidence(R"({"note": 1} then {"confidence": 0.2} and {"confidence": 0.9})");
  CHECK(v.confidence == 0.2);
  const auto bad_first = parse_confidence(R"({"confidence": 3} then {"confidence": 0.9})");
  CHECK(bad_first.parse_path == ParsePath::Unparseable);
  CHECK(parse_path_from_name("Direct") == ParsePath::Direct);
  CHECK_THROWS_AS(parse_path_from_name("Nope"), Error);
}

TEST_CASE("image attachment sniffing") {
  const auto jpeg = encode_jpeg(oracle::textured_image(16, 16, 1));
  const auto a = encode_image(jpeg);
  CHECK(a.media_type == "image/jpeg");
  CHECK(a.data_url().rfind("data:image/jpeg;base64,", 0) == 0);
  CHECK(base64_decode(a.base64) == jpeg);
  const Bytes png_magic{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n', 0, 0};
  CHECK(encode_image(png_magic).media_type == "image/png");
  CHECK_THROWS_AS(encode_image(Bytes{}), Error);
  CHECK_THROWS_AS(encode_image(Bytes{'G', 'I', 'F', '8'}), Error);
}

TEST_CASE("provider config parsing") {
  const auto c = parse_provider_config(
      "# gemini flash\n"
      "name = Gemini-2.5-Flash-Think\n"
      "endpoint = https://example.test/v1beta/models/{model}:generateContent\n"
      "auth_env = GEMINI_KEY\n"
      "model_id = gemini-2.5-flash\n"
      "schema = gemini\n"
      "requests_per_minute = 10\n"
      "reasoning_tokens = 1024\n"
      "ablation_group = flash\n");
  CHECK(c.name == "Gemini-2.5-Flash-Think");
  CHECK(c.schema == ProviderSchema::Gemini);
  CHECK(c.requests_per_minute == 10);
  CHECK(c.reasoning_tokens == 1024);
  CHECK(c.max_in_flight == 4);
  const auto d = c.describe();
  CHECK(d.at("auth_env") == "GEMINI_KEY");
  CHECK(d.at("reasoning_tokens") == "1024");
  CHECK_THROWS_AS(parse_provider_config("endpoint=x\n"), Error);
  CHECK_THROWS_AS(parse_provider_config("model_id=x\n"), Error);
  CHECK_THROWS_AS(parse_provider_config("endpoint=x\nmodel_id=y\nmax_in_flight=two\n"), Error);
  CHECK_THROWS_AS(parse_provider_config("endpoint=x\nmodel_id=y\nschema=bard\n"), Error);
  CHECK_THROWS_AS(parse_provider_config("endpoint=x\nmodel_id=y\njunk\n"), Error);
}

TEST_CASE("describe never carries the secret") {
  ::setenv("FORGEBENCH_TEST_SECRET", "sk-do-not-leak", 1);
  ProviderConfig c;
  c.endpoint = "http://x";
  c.model_id = "m";
  c.auth_env = "FORGEBENCH_TEST_SECRET";
  for (const auto& [k, v] : c.describe()) CHECK(v.find("sk-do-not-leak") == std::string::npos);
  ::unsetenv("FORGEBENCH_TEST_SECRET");
}

TEST_CASE("request bodies per schema") {
  const auto jpeg = encode_jpeg(oracle::textured_image(16, 16, 2));
  ChatRequest r{"", "Is this fraudulent?", encode_image(jpeg), 0};
  const std::string digest = sha256_hex(jpeg);

  const auto canonical = canonical_body("o1", r);
  CHECK(canonical["model"] == "o1");
  CHECK(canonical["messages"][0]["content"][0]["text"] == "Is this fraudulent?");
  CHECK(canonical["reasoning"]["max_tokens"] == 0);
  CHECK(request_image_digest(canonical) == digest);

  ProviderConfig c;
  c.model_id = "claude";
  c.schema = ProviderSchema::Anthropic;
  auto anthropic = build_request_body(c, r);
  CHECK(anthropic["thinking"]["type"] == "disabled");
  CHECK(anthropic["messages"][0]["content"][0]["source"]["media_type"] == "image/jpeg");
  CHECK(request_image_digest(anthropic) == digest);
  r.reasoning_tokens = 2048;
  anthropic = build_request_body(c, r);
  CHECK(anthropic["thinking"]["budget_tokens"] == 2048);
  CHECK(anthropic["max_tokens"] == 4096 + 2048);

  c.schema = ProviderSchema::Gemini;
  const auto gemini = build_request_body(c, r);
  CHECK(gemini["generationConfig"]["thinkingConfig"]["thinkingBudget"] == 2048);
  CHECK(request_image_digest(gemini) == digest);
  CHECK(request_image_digest(nlohmann::json{{"messages", nlohmann::json::array()}}).empty());
}

TEST_CASE("reply extraction") {
  CHECK(extract_reply_text(ProviderSchema::OpenAi, R"({"choices":[{"message":{"content":"hi"}}]})") == "hi");
  CHECK(extract_reply_text(ProviderSchema::Anthropic,
                           R"({"content":[{"type":"thinking","thinking":"..."},{"type":"text","text":"ok"}]})") == "ok");
  CHECK(extract_reply_text(ProviderSchema::Gemini,
                           R"({"candidates":[{"content":{"parts":[{"text":"plan","thought":true},{"text":"done"}]}}]})") ==
        "done");
  CHECK(extract_reply_text(ProviderSchema::OpenAi, "plain text") == "plain text");
  CHECK(extract_reply_text(ProviderSchema::OpenAi, R"({"unexpected":1})") == R"({"unexpected":1})");
}

TEST_CASE("prediction JSON validation") {
  Prediction p{"GPT-O1", "doc1", Label::Forged, 0.4, ParsePath::StructuredJson, "v", "d", 1.5, "t"};
  CHECK(prediction_from_json(prediction_to_json(p)) == p);
  auto j = prediction_to_json(p);
  j["score"] = nullptr;
  CHECK_THROWS_AS(prediction_from_json(j), Error);
  j = prediction_to_json(p);
  j["score"] = 1.2;
  CHECK_THROWS_AS(prediction_from_json(j), Error);
  j = prediction_to_json(p);
  j.erase("truth");
  CHECK_THROWS_AS(prediction_from_json(j), Error);
  p.score.reset();
  p.parse_path = ParsePath::Refusal;
  CHECK(prediction_from_json(prediction_to_json(p)) == p);
}

TEST_CASE("omission accounting") {
  std::vector<Prediction> preds;
  const auto replies = oracle::malformed_replies();
  for (const auto& r : replies) {
    const auto v = parse_confidence(r.text);
    Prediction p;
    p.parse_path = v.parse_path;
    p.score = v.confidence;
    preds.push_back(p);
  }
  const auto counts = count_omissions(preds);
  CHECK(counts.total() == replies.size());
  CHECK(counts.scored == 15);
  CHECK(counts.refusal == 12);
  CHECK(counts.unparseable == 23);
}

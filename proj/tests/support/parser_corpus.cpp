#include "parser_corpus.hpp"

#include <fmt/format.h>

namespace oracle {

using forgebench::ParsePath;

std::vector<CorpusReply> well_formed_replies() {
  std::vector<CorpusReply> out;
  for (int i = 0; i < 30; ++i) {
    const std::string value = fmt::format("{:.2f}", i / 29.0);
    const double expected = std::stod(value);
    const std::string evidence = i % 4 == 1 ? "totals {subtotal + tax} disagree" : "font of the total differs";
    std::string object;
    switch (i % 3) {
      case 0:
        object = fmt::format(R"({{"confidence": {}, "evidence": "{}", "remaining uncertainiies": "none"}})", value,
                             evidence);
        break;
      case 1:
        object = fmt::format("{{\n    \"evidence\": \"{}\",\n    \"confidence\": {},\n    \"remaining uncertainiies\": "
                             "\"store address\"\n}}",
                             evidence, value);
        break;
      default:
        object = fmt::format(R"({{"confidence":{},"evidence":"{}","remaining uncertainiies":""}})", value, evidence);
        break;
    }
    std::string text;
    switch (i % 5) {
      case 0: text = object; break;
      case 1: text = "```json\n" + object + "\n```"; break;
      case 2: text = "Step 1: the layout is standard.\nStep 4: see below.\n\n" + object; break;
      case 3: text = "Here is my conclusion:\n" + object + "\nLet me know if you need more detail."; break;
      default: text = "Analysis complete. {not json here}\n```\n" + object + "\n```\n"; break;
    }
    out.push_back({text, ParsePath::StructuredJson, expected});
  }
  return out;
}

std::vector<CorpusReply> malformed_replies() {
  std::vector<CorpusReply> out;
  auto fallback = [&](std::string text, double c) { out.push_back({std::move(text), ParsePath::RegexFallback, c}); };
  auto refusal = [&](std::string text) { out.push_back({std::move(text), ParsePath::Refusal, std::nullopt}); };
  auto nothing = [&](std::string text) { out.push_back({std::move(text), ParsePath::Unparseable, std::nullopt}); };

  // Confidence stated outside any parseable object.
  fallback("Confidence: 0.35", 0.35);
  fallback("confidence level = 0.8\nEvidence: misaligned digits", 0.8);
  fallback("CONFIDENCE_LEVEL: 1.0", 1.0);
  fallback("Final answer -- confidence: 0", 0.0);
  fallback("confidence=0.05 (low)", 0.05);
  fallback(R"({"confidence": 0.42, "evidence": "the reply was cut)", 0.42);
  fallback(R"({"confidence": 0.66, "evidence": "trailing comma",})", 0.66);
  fallback("1. Confidence level: 0.9\n2. Evidence: tax line is wrong", 0.9);
  fallback("{confidence: 0.25, evidence: unquoted keys}", 0.25);
  fallback("Confidence Level 0.70", 0.70);
  fallback("**Confidence: 0.15**\n**Evidence:** none", 0.15);
  fallback("My confidence is as follows. confidence: 1", 1.0);
  fallback(R"(```json
{"confidence": 0.33, "evidence": "x" "remaining uncertainiies": "y"}
```)",
           0.33);
  fallback("confidence_level:0.999", 0.999);
  fallback("Is it fraudulent? Likely not. Confidence = 0.1, so legitimate.", 0.1);

  // Refusals.
  refusal("I'm sorry, but I cannot assist with that request.");
  refusal("I can\xE2\x80\x99t help with verifying documents.");
  refusal("I am unable to analyze images of financial documents.");
  refusal("Sorry, I can't provide a fraud determination for this image.");
  refusal("I must decline to evaluate this receipt.");
  refusal("As an AI, I'm not able to assist with forensic judgments.");
  refusal("That request goes against my guidelines.");
  refusal("Unfortunately I won't be able to determine authenticity.");
  refusal("I cannot comply with this request.");
  refusal("I'm unable to provide that.");
  refusal("I CANNOT ASSIST WITH THIS.");
  refusal("Apologies, I can not assist here.");

  // Nothing usable.
  nothing("");
  nothing("The receipt looks legitimate to me.");
  nothing("confidence: high");
  nothing("Confidence 85%");
  nothing("confidence: 10");
  nothing(R"({"confidence": 1.7, "evidence": "very sure"})");
  nothing(R"({"confidence": -0.2, "evidence": "negative"})");
  nothing(R"({"confidence": "high", "evidence": "wordy"})");
  nothing(R"({"confidence": "0.6", "evidence": "string number"})");
  nothing(R"({"confidence": null})");
  nothing("{'confidence': 0.3, 'evidence': 'single quotes'}");
  nothing(R"({"score": 0.4, "evidence": "wrong key"})");
  nothing("Fraud probability: 0.7");
  nothing("```json\n{}\n```");
  nothing("Step 1 done. Step 2 done. Step 3 done.");
  nothing("confidence: .5");
  nothing(R"({"confidence": 2})");
  nothing("The model's confidence is unknown.");
  nothing(R"({"confidence": [0.4]})");
  nothing("<html><body>502 Bad Gateway</body></html>");
  nothing(R"({"error": {"message": "rate limited"}})");
  nothing("I can help! The receipt is fine.");
  nothing("confidence: 1.5");
  return out;
}

}  // namespace oracle

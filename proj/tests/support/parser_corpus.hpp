#pragma once

#include <optional>
#include <string>
#include <vector>

#include "forgebench/llm.hpp"

namespace oracle {

struct CorpusReply {
  std::string text;
  forgebench::ParsePath expected_path;
  std::optional<double> expected_confidence;
};

/// 30 replies in the prompt's JSON answer schema, wrapped in the ways models
/// tend to wrap them (code fences, prose, pretty printing, reordered keys).
std::vector<CorpusReply> well_formed_replies();

/// 50 replies that need the fallback pattern, are refusals, or carry no
/// usable confidence. The expected class is fixed by how each one was built.
std::vector<CorpusReply> malformed_replies();

}  // namespace oracle

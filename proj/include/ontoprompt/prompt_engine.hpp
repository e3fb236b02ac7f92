#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ontoprompt/json_util.hpp"
#include "ontoprompt/meta_ontology.hpp"

namespace ontoprompt {

inline constexpr std::string_view kOutputRepresentationKey = "output representation template";

struct PromptEntry {
  std::string key;
  Json value;

  friend bool operator==(const PromptEntry&, const PromptEntry&) = default;
};

struct StructuredPrompt {
  std::string template_id;
  std::string language;
  std::vector<PromptEntry> entries;

  const Json* find(std::string_view key) const;

  // Structural equality ignores template_id, which is not on the wire.
  bool same_structure(const StructuredPrompt& other) const { return entries == other.entries; }
};

using Bindings = std::map<std::string, Json, std::less<>>;

/// Builds a prompt from a template: constants, bound values and defaults in
/// template field order, then the output representation template last.
StructuredPrompt instantiate(const PromptTemplate& tmpl, const Bindings& bindings);

/// Canonical wire text: entry order, 2-space indent, no trailing newline.
std::string render(const StructuredPrompt& prompt);

/// Inverse of render. Throws ParseError unless the text is a JSON object.
StructuredPrompt parse_prompt(std::string_view text, std::string template_id = {});

struct Violation {
  std::string path;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ParsedResponse {
  // Unwrapped payload: the record list for repeated templates, the record
  // object otherwise. Null when `none` is set.
  Json payload;
  bool none = false;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

/// First balanced {...} or [...] region of `raw` that parses as JSON.
/// Throws NoStructuredPayload.
Json extract_structured_value(std::string_view raw);

/// True when `raw` is the bare "None" token (case-insensitive), optionally
/// fenced or quoted.
bool is_none_token(std::string_view raw);

/// Extracts and validates a completion against an output template.
/// Throws NoStructuredPayload when nothing parseable is present.
ParsedResponse parse_response(std::string_view raw, const OutputTemplate& out);

}  // namespace ontoprompt

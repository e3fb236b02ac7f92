#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace ontoprompt {

// Insertion-ordered JSON: canonical output keeps declaration order.
using Json = nlohmann::ordered_json;

// Canonical text: 2-space indent, UTF-8, LF, invalid byte sequences replaced.
std::string canonical_dump(const Json& value);

// Single-line form for logs and NDJSON records.
std::string compact_dump(const Json& value);

// Throws ParseError with the parser's message.
Json parse_json(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace ontoprompt

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace ontoprompt::text {

// UTF-8 helpers backed by ICU. Ill-formed input bytes become U+FFFD.

std::string nfc(std::string_view utf8);
std::string fold_case(std::string_view utf8);
std::size_t code_points(std::string_view utf8);

// Drops C0/C1 control characters other than whitespace controls.
std::string strip_control(std::string_view utf8);

// Runs of Unicode whitespace become one ASCII space; ends are trimmed.
std::string collapse_whitespace(std::string_view utf8);

std::string truncate(std::string_view utf8, std::size_t max_code_points);

bool is_blank(std::string_view utf8);

}  // namespace ontoprompt::text

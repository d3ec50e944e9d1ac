#pragma once

#include <string>
#include <string_view>

namespace measground::text {

std::string trim(std::string_view s);
/// ASCII lowercase; bytes >= 0x80 pass through untouched.
std::string lowercase(std::string_view s);
/// Trim and replace every whitespace run with one space.
std::string collapse_whitespace(std::string_view s);

/// Lowercase + whitespace collapse. Used for answer agreement and placeholder matching.
std::string normalize_answer(std::string_view s);
/// Lowercase, ASCII punctuation stripped, whitespace collapsed. Groups questions.
std::string normalize_question(std::string_view s);

bool is_blank(std::string_view s);

}  // namespace measground::text

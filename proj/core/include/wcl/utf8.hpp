#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace wcl {

// Splits a UTF-8 string into code points, each returned as its byte
// sequence. Invalid bytes are passed through one at a time.
std::vector<std::string> utf8_chars(std::string_view s);

// Whitespace tokenization (ASCII space, tab, CR, LF, VT, FF).
std::vector<std::string> split_words(std::string_view line);

std::string join(const std::vector<std::string>& words, std::string_view sep = " ");

}  // namespace wcl

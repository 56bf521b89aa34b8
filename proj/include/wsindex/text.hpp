#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace wsindex::text {

/// Decodes UTF-8; invalid sequences become U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

bool is_alnum(char32_t c);
char32_t to_lower(char32_t c);

/// Lowercased maximal runs of Unicode alphanumerics. Everything else is a
/// delimiter; single-character tokens are kept.
std::vector<std::string> tokenize(std::string_view s);

/// Lowercase, every non-alphanumeric character mapped to a space, runs of
/// spaces collapsed, no leading or trailing space. Equivalent to joining
/// `tokenize(s)` with single spaces.
std::string normalize(std::string_view s);

/// A token of a normalized string with code point offsets [start, end).
struct Token {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Tokens of `normalize(s)` with offsets into the normalized string.
std::vector<Token> normalized_tokens(std::string_view s);

std::string trim(std::string_view s);

}  // namespace wsindex::text

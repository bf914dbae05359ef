#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace miwb::text {

// Decodes UTF-8. Ill-formed sequences decode to U+FFFD one byte at a time.
std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(char32_t cp);
void append_utf8(std::string& out, char32_t cp);

bool is_valid_utf8(std::string_view s);

// Han ideographs (all extension blocks), compatibility ideographs, kana and
// Hangul syllables.
bool is_cjk(char32_t cp);

bool is_space(char32_t cp);

// Letters and digits outside the CJK set. Everything that is neither CJK,
// space nor word character is treated as punctuation/symbol.
bool is_word_char(char32_t cp);

char32_t ascii_lower(char32_t cp);

std::string trim(std::string_view s);

// Share of CJK codepoints among word units (CJK codepoints plus runs of other
// letters/digits); 0 when the text has no word units.
double cjk_share(std::string_view s);

}  // namespace miwb::text

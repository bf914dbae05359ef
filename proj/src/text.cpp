#include "miwb/text.hpp"

namespace miwb::text {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

bool in(char32_t cp, char32_t lo, char32_t hi) { return cp >= lo && cp <= hi; }

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlongs, surrogates and out-of-range values.
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (!ok || cp < kMin[len] || cp > 0x10FFFF || in(cp, 0xD800, 0xDFFF)) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode_utf8(char32_t cp) {
  std::string out;
  append_utf8(out, cp);
  return out;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  for (char32_t cp : decode_utf8(s)) {
    if (cp == kReplacement) {
      // A literal U+FFFD is three bytes EF BF BD; anything else is a decode failure.
      if (s.substr(i, 3) != "\xEF\xBF\xBD") return false;
    }
    i += encode_utf8(cp).size();
  }
  return true;
}

bool is_cjk(char32_t cp) {
  return in(cp, 0x4E00, 0x9FFF)      // unified ideographs
         || in(cp, 0x3400, 0x4DBF)   // extension A
         || in(cp, 0x20000, 0x2EBEF) // extensions B-F
         || in(cp, 0x30000, 0x3134F) // extension G
         || in(cp, 0xF900, 0xFAFF)   // compatibility ideographs
         || in(cp, 0x2F800, 0x2FA1F) // compatibility supplement
         || in(cp, 0x3040, 0x309F)   // hiragana
         || in(cp, 0x30A0, 0x30FF)   // katakana
         || in(cp, 0xAC00, 0xD7AF);  // hangul syllables
}

bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
         cp == 0x85 || cp == 0xA0 || cp == 0x1680 || in(cp, 0x2000, 0x200A) || cp == 0x2028 ||
         cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000 || cp == 0xFEFF;
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
  }
  if (is_cjk(cp) || is_space(cp)) return false;
  if (cp == 0xFFFD) return false;
  // Latin-1 punctuation and symbols, except the letters/ordinals in that block.
  if (in(cp, 0x80, 0xBF)) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  // General punctuation through miscellaneous symbols and arrows.
  if (in(cp, 0x2000, 0x2BFF)) return false;
  if (in(cp, 0x3000, 0x303F)) return false;  // CJK symbols and punctuation
  if (in(cp, 0xFE30, 0xFE4F)) return false;  // CJK compatibility forms
  if (in(cp, 0xFE50, 0xFE6F)) return false;  // small form variants
  if (in(cp, 0xFF00, 0xFFEF)) {
    // Fullwidth digits and letters are words; the rest of the block is punctuation.
    return in(cp, 0xFF10, 0xFF19) || in(cp, 0xFF21, 0xFF3A) || in(cp, 0xFF41, 0xFF5A);
  }
  if (in(cp, 0x1F000, 0x1FAFF)) return false;  // emoji and pictographs
  if (in(cp, 0xE000, 0xF8FF)) return false;    // private use
  return true;
}

char32_t ascii_lower(char32_t cp) {
  return (cp >= 'A' && cp <= 'Z') ? cp + ('a' - 'A') : cp;
}

std::string trim(std::string_view s) {
  const auto cps = decode_utf8(s);
  std::size_t b = 0;
  std::size_t e = cps.size();
  while (b < e && is_space(cps[b])) ++b;
  while (e > b && is_space(cps[e - 1])) --e;
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = b; i < e; ++i) append_utf8(out, cps[i]);
  return out;
}

double cjk_share(std::string_view s) {
  // Units: one per CJK codepoint, one per maximal run of other word characters.
  std::size_t cjk = 0;
  std::size_t runs = 0;
  bool in_run = false;
  for (char32_t cp : decode_utf8(s)) {
    if (is_cjk(cp)) {
      ++cjk;
      in_run = false;
    } else if (is_word_char(cp)) {
      if (!in_run) ++runs;
      in_run = true;
    } else {
      in_run = false;
    }
  }
  const std::size_t total = cjk + runs;
  return total == 0 ? 0.0 : static_cast<double>(cjk) / static_cast<double>(total);
}

}  // namespace miwb::text

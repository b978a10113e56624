#pragma once

// Tweet-style text normalization: lowercase, then drop URLs, emoji,
// @-mentions and the reserved words "rt" and "via", collapsing whitespace.
//
// Filtering is word-level (whitespace-delimited), which is what makes the
// function idempotent: no surviving word can become removable on a second
// pass, and removing a word never glues its neighbours together.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace stanceformer::text {

inline constexpr std::array<std::string_view, 2> kReservedWords{"rt", "via"};

namespace detail {

inline bool is_emoji_codepoint(std::uint32_t cp) {
  return (cp >= 0x1F000 && cp <= 0x1FAFF) ||  // pictographs, emoticons, transport, flags
         (cp >= 0x2600 && cp <= 0x27BF) ||    // misc symbols, dingbats
         (cp >= 0x2300 && cp <= 0x23FF) ||    // misc technical (watch, hourglass)
         (cp >= 0x2B00 && cp <= 0x2BFF) ||    // arrows, stars
         (cp >= 0xFE00 && cp <= 0xFE0F) ||    // variation selectors
         cp == 0x200D ||                      // zero-width joiner
         cp == 0x20E3 ||                      // combining keycap
         (cp >= 0xE0020 && cp <= 0xE007F);    // tag sequences
}

// Decodes one UTF-8 sequence at s[i]. Returns its byte length, or 0 when the
// bytes are not well-formed (the caller then keeps the byte verbatim).
inline std::size_t decode_utf8(std::string_view s, std::size_t i, std::uint32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = 0;
  if (b0 < 0x80) {
    cp = b0;
    return 1;
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
    return 0;
  }
  if (i + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  return len;
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline bool is_url(std::string_view word) {
  return word.find("://") != std::string_view::npos || word.starts_with("www.");
}

inline bool is_reserved(std::string_view word) {
  for (auto r : kReservedWords)
    if (word == r) return true;
  return false;
}

}  // namespace detail

inline std::string preprocess(std::string_view input) {
  // Lowercase ASCII and turn emoji into word breaks.
  std::string cleaned;
  cleaned.reserve(input.size());
  for (std::size_t i = 0; i < input.size();) {
    std::uint32_t cp = 0;
    const std::size_t len = detail::decode_utf8(input, i, cp);
    if (len == 0) {
      cleaned.push_back(input[i]);
      ++i;
      continue;
    }
    if (len == 1) {
      const char c = input[i];
      cleaned.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    } else if (detail::is_emoji_codepoint(cp)) {
      cleaned.push_back(' ');
    } else {
      cleaned.append(input.substr(i, len));
    }
    i += len;
  }

  std::string out;
  out.reserve(cleaned.size());
  std::string_view rest = cleaned;
  while (!rest.empty()) {
    std::size_t start = 0;
    while (start < rest.size() && detail::is_space(rest[start])) ++start;
    std::size_t end = start;
    while (end < rest.size() && !detail::is_space(rest[end])) ++end;
    const std::string_view word = rest.substr(start, end - start);
    rest.remove_prefix(end);
    if (word.empty()) continue;
    if (detail::is_url(word) || word.front() == '@' || detail::is_reserved(word)) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(word);
  }
  return out;
}

}  // namespace stanceformer::text

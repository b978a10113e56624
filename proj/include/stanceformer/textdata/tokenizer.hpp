#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "stanceformer/textdata/vocabulary.hpp"

namespace stanceformer::text {

inline bool is_ascii_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

// Word-level split: whitespace separates words, and each ASCII punctuation
// character becomes a token of its own. Non-ASCII bytes stay inside words.
inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      words.emplace_back(1, c);
    } else {
      current.push_back(c);
    }
  }
  flush();
  return words;
}

inline std::vector<TokenId> tokenize(std::string_view s, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(s)) ids.push_back(vocab.id(w));
  return ids;
}

}  // namespace stanceformer::text

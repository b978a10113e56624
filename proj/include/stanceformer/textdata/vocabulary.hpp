#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stanceformer/error.hpp"

namespace stanceformer::text {

using TokenId = std::int32_t;

// Special tokens occupy ids 0..3 in every vocabulary.
inline constexpr TokenId kCls = 0;
inline constexpr TokenId kSep = 1;
inline constexpr TokenId kPad = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kFirstRegularId = 4;

class Vocabulary {
 public:
  Vocabulary() : tokens_{"[CLS]", "[SEP]", "[PAD]", "[UNK]"} {
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<TokenId>(i));
  }

  // Regular tokens receive ids 4, 5, … in the order given; repeats are skipped.
  static Vocabulary from_tokens(std::span<const std::string> tokens) {
    Vocabulary v;
    for (const auto& t : tokens) v.add(t);
    return v;
  }

  TokenId add(const std::string& token) {
    if (token.empty()) throw DataError("vocabulary: empty token");
    auto [it, inserted] = index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  TokenId id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.contains(token); }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace stanceformer::text

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "stanceformer/error.hpp"
#include "stanceformer/textdata/vocabulary.hpp"

namespace stanceformer::text {

// Half-open index range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const Span&) const = default;
};

// Layout: [CLS] text [SEP] target [SEP] [PAD]…
// so ids.size() == 1 + text_span.size() + 1 + target_span.size() + 1 + pad_len.
struct TokenizedExample {
  std::vector<TokenId> ids;
  Span text_span;
  Span target_span;
  std::size_t pad_len = 0;
  std::int32_t label_id = 0;

  std::size_t seq() const { return ids.size(); }
  std::size_t content_len() const { return ids.size() - pad_len; }
};

// Text is truncated from the right to make room; the target is never cut.
inline TokenizedExample assemble(std::span<const TokenId> text_ids, std::span<const TokenId> target_ids,
                                 std::size_t max_len, std::int32_t label_id = 0) {
  if (max_len < 3 || target_ids.size() > max_len - 3) {
    std::ostringstream os;
    os << "assemble: target of " << target_ids.size() << " tokens does not fit max_len " << max_len
       << " (limit is max_len - 3)";
    throw DataError(os.str());
  }
  const std::size_t text_len = std::min(text_ids.size(), max_len - 3 - target_ids.size());

  TokenizedExample ex;
  ex.label_id = label_id;
  ex.ids.reserve(max_len);
  ex.ids.push_back(kCls);
  ex.ids.insert(ex.ids.end(), text_ids.begin(), text_ids.begin() + static_cast<std::ptrdiff_t>(text_len));
  ex.text_span = {1, 1 + text_len};
  ex.ids.push_back(kSep);
  ex.target_span = {ex.ids.size(), ex.ids.size() + target_ids.size()};
  ex.ids.insert(ex.ids.end(), target_ids.begin(), target_ids.end());
  ex.ids.push_back(kSep);
  ex.pad_len = max_len - ex.ids.size();
  ex.ids.resize(max_len, kPad);
  return ex;
}

}  // namespace stanceformer::text

#pragma once

// Target-awareness bias: attention logits between two target tokens are
// raised by alpha before the softmax,
//
//   A = softmax(Q·Kᵀ/√d_k + alpha·M) · V,
//
// where M is seq×seq and equals 1 exactly on target_span × target_span.
// M is stored as the block descriptor and never materialized on the hot path.

#include <cmath>
#include <cstddef>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stanceformer/error.hpp"
#include "stanceformer/numcore/tensor.hpp"
#include "stanceformer/textdata/example.hpp"

namespace stanceformer::ta {

// Pre-softmax value written into padding columns. Large enough that exp()
// underflows to exactly zero in float and double, small enough to stay finite.
inline constexpr double kMaskedLogit = -1e30;

struct HeadSite {
  std::size_t layer = 0;
  std::size_t head = 0;
  auto operator<=>(const HeadSite&) const = default;
};

// Either every (layer, head) pair or an explicit subset.
class Placement {
 public:
  static Placement all() { return Placement{}; }
  static Placement sites(std::set<HeadSite> s) {
    Placement p;
    p.all_ = false;
    p.sites_ = std::move(s);
    return p;
  }

  // "all" or a comma/space separated list of "layer:head".
  static Placement parse(const std::string& spec) {
    std::string trimmed;
    for (char c : spec)
      if (c != ' ') trimmed.push_back(c);
    if (trimmed == "all") return all();
    std::set<HeadSite> out;
    std::size_t pos = 0;
    while (pos <= trimmed.size()) {
      std::size_t comma = trimmed.find(',', pos);
      if (comma == std::string::npos) comma = trimmed.size();
      const std::string item = trimmed.substr(pos, comma - pos);
      const std::size_t colon = item.find(':');
      if (item.empty() || colon == std::string::npos || colon == 0 || colon + 1 == item.size() ||
          item.find_first_not_of("0123456789:") != std::string::npos || item.find(':', colon + 1) != std::string::npos) {
        throw ConfigError("expected \"all\" or a list of layer:head, got \"" + spec + "\"");
      }
      out.insert({std::stoul(item.substr(0, colon)), std::stoul(item.substr(colon + 1))});
      pos = comma + 1;
    }
    return sites(std::move(out));
  }

  bool is_all() const { return all_; }
  const std::set<HeadSite>& site_set() const { return sites_; }
  bool contains(std::size_t layer, std::size_t head) const { return all_ || sites_.contains({layer, head}); }

  std::string to_string() const {
    if (all_) return "all";
    std::ostringstream os;
    bool first = true;
    for (const auto& s : sites_) {
      if (!first) os << ',';
      first = false;
      os << s.layer << ':' << s.head;
    }
    return os.str();
  }

  bool operator==(const Placement&) const = default;

 private:
  bool all_ = true;
  std::set<HeadSite> sites_;
};

struct TargetAwarenessConfig {
  double alpha = 0.0;
  Placement placement = Placement::all();
  bool enabled_at_inference = true;

  void validate(std::size_t n_layers, std::size_t n_heads) const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
      throw ConfigError("ta.alpha must be a finite non-negative number, got " + std::to_string(alpha));
    }
    for (const auto& s : placement.site_set()) {
      if (s.layer >= n_layers || s.head >= n_heads) {
        std::ostringstream os;
        os << "ta.placement site " << s.layer << ':' << s.head << " outside model of " << n_layers << " layers x "
           << n_heads << " heads";
        throw ConfigError(os.str());
      }
    }
  }

  // Alpha that a given site actually uses; zero off-placement, and zero at
  // inference when the bias is restricted to training.
  double effective_alpha(std::size_t layer, std::size_t head, bool training) const {
    if (!training && !enabled_at_inference) return 0.0;
    return placement.contains(layer, head) ? alpha : 0.0;
  }

  bool operator==(const TargetAwarenessConfig&) const = default;
};

class TargetAwarenessBias {
 public:
  TargetAwarenessBias(text::Span block, std::size_t seq) : block_(block), seq_(seq) {
    if (block.end > seq || block.begin > block.end) throw DimensionError("target-awareness block outside sequence");
  }

  const text::Span& block() const { return block_; }
  std::size_t seq() const { return seq_; }

  double at(std::size_t i, std::size_t j) const { return block_.contains(i) && block_.contains(j) ? 1.0 : 0.0; }

  // Row-major seq×seq realization.
  std::vector<double> dense() const {
    std::vector<double> m(seq_ * seq_, 0.0);
    for (std::size_t i = block_.begin; i < block_.end; ++i)
      for (std::size_t j = block_.begin; j < block_.end; ++j) m[i * seq_ + j] = 1.0;
    return m;
  }

 private:
  text::Span block_;
  std::size_t seq_;
};

// The block is exactly the target tokens; the [SEP]s around them, [CLS] and
// padding stay outside it.
inline TargetAwarenessBias build_bias(const text::TokenizedExample& example) {
  return TargetAwarenessBias(example.target_span, example.seq());
}

// Per-slice parameters for apply_bias over a stack of attention matrices.
struct SliceBias {
  text::Span block;
  double alpha = 0.0;
  std::size_t content_len = 0;  // columns at or beyond this index are padding
};

// logits: [N×S×S] (or [S×S] with one slice). Adds alpha on each slice's
// target block, then overwrites padding columns with kMaskedLogit. Bias first,
// mask second, so alpha can never revive a padded position. Gradient reaches
// the logits everywhere except the padding columns.
template <typename T>
num::Tensor<T> apply_bias(const num::Tensor<T>& logits, std::span<const SliceBias> slices) {
  const auto& shape = logits.shape();
  const bool single = shape.size() == 2;
  if (!(single || shape.size() == 3) || shape[shape.size() - 1] != shape[shape.size() - 2]) {
    throw DimensionError("apply_bias: logits must be [S x S] or [N x S x S], got " + num::to_string(shape));
  }
  const std::size_t seq = shape.back();
  const std::size_t n = single ? 1 : shape[0];
  if (slices.size() != n) {
    std::ostringstream os;
    os << "apply_bias: " << slices.size() << " bias descriptors for " << n << " attention matrices";
    throw DimensionError(os.str());
  }
  for (const auto& s : slices) {
    if (s.block.end > seq || s.block.begin > s.block.end || s.content_len > seq) {
      std::ostringstream os;
      os << "apply_bias: block [" << s.block.begin << "," << s.block.end << ") or content length " << s.content_len
         << " outside sequence of " << seq;
      throw DimensionError(os.str());
    }
  }

  std::vector<T> out(logits.data().begin(), logits.data().end());
  const T masked = T(kMaskedLogit);
  for (std::size_t k = 0; k < n; ++k) {
    T* m = out.data() + k * seq * seq;
    const auto& s = slices[k];
    if (s.alpha != 0.0) {
      const T a = T(s.alpha);
      for (std::size_t i = s.block.begin; i < s.block.end; ++i)
        for (std::size_t j = s.block.begin; j < s.block.end; ++j) m[i * seq + j] += a;
    }
    for (std::size_t i = 0; i < seq; ++i)
      for (std::size_t j = s.content_len; j < seq; ++j) m[i * seq + j] = masked;
  }
  std::vector<std::size_t> content(n);
  for (std::size_t k = 0; k < n; ++k) content[k] = slices[k].content_len;
  return num::Tensor<T>::make_result(shape, std::move(out), {logits},
                                     [seq, content = std::move(content)](num::detail::Node<T>& self) {
                                       auto& g = num::parent_grad(self, 0);
                                       for (std::size_t k = 0; k < content.size(); ++k)
                                         for (std::size_t i = 0; i < seq; ++i)
                                           for (std::size_t j = 0; j < content[k]; ++j) {
                                             const std::size_t at = (k * seq + i) * seq + j;
                                             g[at] += self.grad[at];
                                           }
                                     });
}

// Single-matrix form; content_len == seq means no padding.
template <typename T>
num::Tensor<T> apply_bias(const num::Tensor<T>& scaled_logits, const TargetAwarenessBias& bias, double alpha,
                          std::size_t content_len) {
  if (scaled_logits.rank() != 2 || scaled_logits.dim(0) != bias.seq() || scaled_logits.dim(1) != bias.seq()) {
    std::ostringstream os;
    os << "apply_bias: logits " << num::to_string(scaled_logits.shape()) << " do not match bias of seq "
       << bias.seq();
    throw DimensionError(os.str());
  }
  const SliceBias slice{bias.block(), alpha, content_len};
  return apply_bias(scaled_logits, std::span<const SliceBias>(&slice, 1));
}

// Post-softmax probability that row `row` of a seq×seq attention matrix puts
// on the target columns.
template <typename T>
T target_mass(std::span<const T> attention, std::size_t seq, std::size_t row, const text::Span& block) {
  T mass{0};
  for (std::size_t j = block.begin; j < block.end; ++j) mass += attention[row * seq + j];
  return mass;
}

}  // namespace stanceformer::ta

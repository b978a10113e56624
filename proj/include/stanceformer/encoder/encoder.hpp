#pragma once

// Post-LN transformer encoder classifier whose self-attention takes a
// per-example target-awareness bias.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include "stanceformer/encoder/params.hpp"
#include "stanceformer/numcore/ops.hpp"
#include "stanceformer/tamatrix/target_awareness.hpp"
#include "stanceformer/textdata/example.hpp"

namespace stanceformer::model {

inline constexpr double kLayerNormEps = 1e-12;

// Examples flattened for one forward pass.
struct Batch {
  std::size_t size = 0;
  std::size_t seq = 0;
  std::vector<std::int32_t> ids;        // [size·seq]
  std::vector<std::int32_t> positions;  // [size·seq]
  std::vector<text::Span> target_spans;
  std::vector<std::size_t> content_lens;
  std::vector<std::int32_t> labels;

  static Batch from(std::span<const text::TokenizedExample> examples, std::size_t max_len) {
    if (examples.empty()) throw DimensionError("batch: no examples");
    Batch b;
    b.size = examples.size();
    b.seq = max_len;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      if (ex.seq() != max_len) {
        std::ostringstream os;
        os << "batch: example " << i << " has seq " << ex.seq() << ", model expects max_len " << max_len;
        throw DimensionError(os.str());
      }
      b.ids.insert(b.ids.end(), ex.ids.begin(), ex.ids.end());
      for (std::size_t s = 0; s < max_len; ++s) b.positions.push_back(static_cast<std::int32_t>(s));
      b.target_spans.push_back(ex.target_span);
      b.content_lens.push_back(ex.content_len());
      b.labels.push_back(ex.label_id);
    }
    return b;
  }
};

// Post-softmax attention of one (layer, head) for one example.
struct AttentionMap {
  std::size_t example = 0;
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t seq = 0;
  std::vector<double> weights;  // row-major seq×seq
};

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
  std::vector<AttentionMap>* capture = nullptr;
};

// Scaled dot-product attention over stacked (example, head) slices:
// softmax(Q·Kᵀ/√d_k + alpha·M) · V, with padding columns masked after the
// bias. q, k, v: [N×S×d_k]. Both the encoder and attention_head go through
// here, so the unbiased path is literally the alpha = 0 path.
template <typename T>
struct AttentionResult {
  num::Tensor<T> context;  // [N×S×d_k]
  num::Tensor<T> probs;    // [N×S×S], before dropout
};

template <typename T>
AttentionResult<T> scaled_dot_attention(const num::Tensor<T>& q, const num::Tensor<T>& k, const num::Tensor<T>& v,
                                        std::span<const ta::SliceBias> slices, double dropout = 0.0,
                                        std::mt19937_64* rng = nullptr) {
  const T inv_sqrt_dk = T(1) / std::sqrt(T(q.dim(2)));
  auto logits = num::scale(num::bmm_nt(q, k), inv_sqrt_dk);
  auto biased = ta::apply_bias(logits, slices);
  auto probs = num::softmax_rows(biased);
  auto dropped = (dropout > 0.0 && rng) ? num::dropout(probs, dropout, *rng) : probs;
  return {num::bmm(dropped, v), probs};
}

// One attention head on a single sequence x[seq×d_model] with per-head
// projections w_query/w_key/w_value [d_model×d_k]. Returns [seq×d_k].
template <typename T>
num::Tensor<T> attention_head(const num::Tensor<T>& x, const num::Tensor<T>& w_query, const num::Tensor<T>& w_key,
                              const num::Tensor<T>& w_value, const ta::TargetAwarenessBias& bias, double alpha,
                              std::size_t content_len, num::Tensor<T>* probs_out = nullptr) {
  if (x.rank() != 2 || x.dim(0) != bias.seq()) {
    std::ostringstream os;
    os << "attention_head: input " << num::to_string(x.shape()) << " does not match bias seq " << bias.seq();
    throw DimensionError(os.str());
  }
  const std::size_t seq = x.dim(0);
  auto project = [&](const num::Tensor<T>& w) { return num::split_heads(num::matmul(x, w), 1, seq, 1); };
  const ta::SliceBias slice{bias.block(), alpha, content_len};
  auto r = scaled_dot_attention(project(w_query), project(w_key), project(w_value),
                                std::span<const ta::SliceBias>(&slice, 1));
  if (probs_out) *probs_out = r.probs;
  return num::merge_heads(r.context, 1, 1);
}

// Logits [batch × n_labels] read from the [CLS] position.
template <typename T>
num::Tensor<T> encode(const Batch& batch, const ModelParams<T>& params, const ta::TargetAwarenessConfig& ta_cfg,
                      const ForwardOptions& opts = {}) {
  const ModelConfig& cfg = params.config;
  if (batch.seq != cfg.max_len) {
    std::ostringstream os;
    os << "encode: batch seq " << batch.seq << " differs from model max_len " << cfg.max_len;
    throw DimensionError(os.str());
  }
  const double p_drop = opts.training ? cfg.dropout : 0.0;
  if (p_drop > 0.0 && !opts.rng) throw UsageError("encode: training with dropout needs an rng");
  auto drop = [&](const num::Tensor<T>& t) { return p_drop > 0.0 ? num::dropout(t, p_drop, *opts.rng) : t; };

  const std::size_t B = batch.size, S = batch.seq, H = cfg.n_heads;
  auto x = num::add(num::embedding(params.token_embedding, std::span<const std::int32_t>(batch.ids)),
                    num::embedding(params.position_embedding, std::span<const std::int32_t>(batch.positions)));
  x = drop(num::layer_norm(x, params.ln_embed_gamma, params.ln_embed_beta, T(kLayerNormEps)));

  std::vector<ta::SliceBias> slices(B * H);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& lp = params.layers[l];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        slices[b * H + h] = {batch.target_spans[b], ta_cfg.effective_alpha(l, h, opts.training), batch.content_lens[b]};

    auto proj = [&](const num::Tensor<T>& w, const num::Tensor<T>& bias) {
      return num::split_heads(num::add_bias(num::matmul(x, w), bias), B, S, H);
    };
    auto attn = scaled_dot_attention(proj(lp.w_query, lp.b_query), proj(lp.w_key, lp.b_key),
                                     proj(lp.w_value, lp.b_value), std::span<const ta::SliceBias>(slices), p_drop,
                                     opts.rng);
    if (opts.capture) {
      auto probs = attn.probs.data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < H; ++h) {
          AttentionMap m{b, l, h, S, {}};
          auto first = probs.begin() + static_cast<std::ptrdiff_t>((b * H + h) * S * S);
          m.weights.assign(first, first + static_cast<std::ptrdiff_t>(S * S));
          opts.capture->push_back(std::move(m));
        }
    }
    auto attn_out = num::add_bias(num::matmul(num::merge_heads(attn.context, B, H), lp.w_out), lp.b_out);
    x = num::layer_norm(num::add(x, drop(attn_out)), lp.ln_attn_gamma, lp.ln_attn_beta, T(kLayerNormEps));

    auto hidden = num::gelu(num::add_bias(num::matmul(x, lp.w_ff1), lp.b_ff1));
    auto ff = num::add_bias(num::matmul(hidden, lp.w_ff2), lp.b_ff2);
    x = num::layer_norm(num::add(x, drop(ff)), lp.ln_ff_gamma, lp.ln_ff_beta, T(kLayerNormEps));
  }
  auto cls = num::select_rows(x, S);
  return num::add_bias(num::matmul(cls, params.w_classifier), params.b_classifier);
}

template <typename T>
num::Tensor<T> encode(std::span<const text::TokenizedExample> examples, const ModelParams<T>& params,
                      const ta::TargetAwarenessConfig& ta_cfg, const ForwardOptions& opts = {}) {
  return encode(Batch::from(examples, params.config.max_len), params, ta_cfg, opts);
}

// Every (layer, head) post-softmax matrix used in an eval-mode forward pass of
// one example, ordered by layer then head.
template <typename T>
std::vector<AttentionMap> attention_maps(const text::TokenizedExample& example, const ModelParams<T>& params,
                                         const ta::TargetAwarenessConfig& ta_cfg) {
  std::vector<AttentionMap> maps;
  ForwardOptions opts;
  opts.capture = &maps;
  encode(std::span<const text::TokenizedExample>(&example, 1), params, ta_cfg, opts);
  return maps;
}

// Argmax class per row; ties go to the lower index.
template <typename T>
std::vector<std::int32_t> predict(const num::Tensor<T>& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<std::int32_t> out(n);
  auto d = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (d[i * c + j] > d[i * c + best]) best = j;
    out[i] = static_cast<std::int32_t>(best);
  }
  return out;
}

}  // namespace stanceformer::model

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stanceformer/encoder/config.hpp"
#include "stanceformer/numcore/tensor.hpp"

namespace stanceformer::model {

template <typename T>
struct LayerParams {
  num::Tensor<T> w_query, b_query, w_key, b_key, w_value, b_value, w_out, b_out;
  num::Tensor<T> ln_attn_gamma, ln_attn_beta;
  num::Tensor<T> w_ff1, b_ff1, w_ff2, b_ff2;
  num::Tensor<T> ln_ff_gamma, ln_ff_beta;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  num::Tensor<T> token_embedding;     // [vocab × d_model]
  num::Tensor<T> position_embedding;  // [max_len × d_model]
  num::Tensor<T> ln_embed_gamma, ln_embed_beta;
  std::vector<LayerParams<T>> layers;
  num::Tensor<T> w_classifier;  // [d_model × n_labels]
  num::Tensor<T> b_classifier;

  // Stable (name, tensor) enumeration; the order is part of the checkpoint
  // format and of the optimizer state layout.
  std::vector<std::pair<std::string, num::Tensor<T>>> named() const {
    std::vector<std::pair<std::string, num::Tensor<T>>> out{
        {"token_embedding", token_embedding},
        {"position_embedding", position_embedding},
        {"ln_embed.gamma", ln_embed_gamma},
        {"ln_embed.beta", ln_embed_beta},
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& p = layers[l];
      const std::string pre = "layer" + std::to_string(l) + ".";
      out.insert(out.end(), {
                                {pre + "w_query", p.w_query},
                                {pre + "b_query", p.b_query},
                                {pre + "w_key", p.w_key},
                                {pre + "b_key", p.b_key},
                                {pre + "w_value", p.w_value},
                                {pre + "b_value", p.b_value},
                                {pre + "w_out", p.w_out},
                                {pre + "b_out", p.b_out},
                                {pre + "ln_attn.gamma", p.ln_attn_gamma},
                                {pre + "ln_attn.beta", p.ln_attn_beta},
                                {pre + "w_ff1", p.w_ff1},
                                {pre + "b_ff1", p.b_ff1},
                                {pre + "w_ff2", p.w_ff2},
                                {pre + "b_ff2", p.b_ff2},
                                {pre + "ln_ff.gamma", p.ln_ff_gamma},
                                {pre + "ln_ff.beta", p.ln_ff_beta},
                            });
    }
    out.emplace_back("classifier.weight", w_classifier);
    out.emplace_back("classifier.bias", b_classifier);
    return out;
  }

  // Handles share storage with this object, so an optimizer stepping them
  // updates the model.
  std::vector<num::Tensor<T>> tensors() const {
    std::vector<num::Tensor<T>> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.size();
    return n;
  }

  // Deep copy (fresh storage), optionally in another precision.
  template <typename U = T>
  ModelParams<U> clone() const {
    ModelParams<U> out = ModelParams<U>::shaped(config);
    auto src = named();
    auto dst = out.named();
    for (std::size_t i = 0; i < src.size(); ++i) {
      auto s = src[i].second.data();
      auto d = dst[i].second.mutable_data();
      for (std::size_t k = 0; k < s.size(); ++k) d[k] = static_cast<U>(s[k]);
    }
    return out;
  }

  // All-zero parameters with the right shapes (gammas zero too).
  static ModelParams shaped(const ModelConfig& cfg) {
    cfg.validate();
    auto z = [](num::Shape s) { return num::Tensor<T>::zeros(std::move(s), true); };
    const std::size_t d = cfg.d_model;
    ModelParams p;
    p.config = cfg;
    p.token_embedding = z({cfg.vocab_size, d});
    p.position_embedding = z({cfg.max_len, d});
    p.ln_embed_gamma = z({d});
    p.ln_embed_beta = z({d});
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      LayerParams<T> lp;
      lp.w_query = z({d, d});
      lp.b_query = z({d});
      lp.w_key = z({d, d});
      lp.b_key = z({d});
      lp.w_value = z({d, d});
      lp.b_value = z({d});
      lp.w_out = z({d, d});
      lp.b_out = z({d});
      lp.ln_attn_gamma = z({d});
      lp.ln_attn_beta = z({d});
      lp.w_ff1 = z({d, cfg.d_ff});
      lp.b_ff1 = z({cfg.d_ff});
      lp.w_ff2 = z({cfg.d_ff, d});
      lp.b_ff2 = z({d});
      lp.ln_ff_gamma = z({d});
      lp.ln_ff_beta = z({d});
      p.layers.push_back(std::move(lp));
    }
    p.w_classifier = z({d, cfg.n_labels});
    p.b_classifier = z({cfg.n_labels});
    return p;
  }

  // Gaussian weights (std 0.02, drawn with Box-Muller from mt19937_64 so the
  // stream is identical across standard libraries), unit gammas, zero biases.
  static ModelParams init(const ModelConfig& cfg) {
    ModelParams p = shaped(cfg);
    std::mt19937_64 rng(cfg.seed);
    auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
    auto fill_normal = [&](num::Tensor<T>& t, double stddev) {
      auto d = t.mutable_data();
      for (std::size_t i = 0; i < d.size(); i += 2) {
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double theta = 2.0 * M_PI * uniform();
        d[i] = static_cast<T>(stddev * r * std::cos(theta));
        if (i + 1 < d.size()) d[i + 1] = static_cast<T>(stddev * r * std::sin(theta));
      }
    };
    auto fill_ones = [](num::Tensor<T>& t) {
      for (auto& v : t.mutable_data()) v = T(1);
    };
    constexpr double kStd = 0.02;
    fill_normal(p.token_embedding, kStd);
    fill_normal(p.position_embedding, kStd);
    fill_ones(p.ln_embed_gamma);
    for (auto& lp : p.layers) {
      for (auto* w : {&lp.w_query, &lp.w_key, &lp.w_value, &lp.w_out, &lp.w_ff1, &lp.w_ff2}) fill_normal(*w, kStd);
      fill_ones(lp.ln_attn_gamma);
      fill_ones(lp.ln_ff_gamma);
    }
    fill_normal(p.w_classifier, kStd);
    return p;
  }
};

}  // namespace stanceformer::model

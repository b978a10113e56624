#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>

#include "stanceformer/error.hpp"

namespace stanceformer::model {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 0;  // filled from the vocabulary
  std::size_t max_len = 48;
  std::size_t n_labels = 3;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  std::size_t d_k() const { return d_model / n_heads; }

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
    if (n_layers == 0) fail("n_layers must be at least 1");
    if (n_heads == 0) fail("n_heads must be at least 1");
    if (d_model == 0 || d_model % n_heads != 0) {
      std::ostringstream os;
      os << "d_model " << d_model << " must be a positive multiple of n_heads " << n_heads;
      fail(os.str());
    }
    if (d_ff == 0) fail("d_ff must be at least 1");
    if (vocab_size < 5) fail("vocab_size must cover the 4 special tokens and at least one word");
    if (max_len < 5) fail("max_len must be at least 5 ([CLS] x [SEP] t [SEP])");
    if (n_labels < 2) fail("n_labels must be at least 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace stanceformer::model

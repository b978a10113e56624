#pragma once

// Synthetic stance corpus whose label depends on the interaction between a
// stance word in the text and the target. Stance words fall into three
// groups; under target t a word of group g carries label (g + t) mod 3. A
// classifier that never sees the target therefore cannot separate the
// targets that shift the same word to different labels.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stanceformer/textdata/dataset.hpp"
#include "stanceformer/textdata/tokenizer.hpp"

namespace stanceformer::text {

struct SynthSpec {
  std::uint64_t seed = 1;
  std::size_t n_train = 512;
  std::size_t n_val = 128;
  std::size_t n_test = 128;
  std::size_t n_targets = 4;
  std::size_t vocab_size = 200;
  std::size_t min_text_len = 6;
  std::size_t max_text_len = 14;
};

struct SynthLexicon {
  static constexpr std::size_t kNumLabels = 3;

  std::vector<std::string> labels{"AGAINST", "FAVOR", "NONE"};
  std::vector<std::string> target_names;  // may span several words
  std::vector<std::string> stance_words;
  std::vector<std::size_t> stance_group;  // parallel to stance_words
  std::vector<std::string> distractors;

  std::size_t label_for(std::size_t word, std::size_t target) const {
    return (stance_group.at(word) + target) % kNumLabels;
  }
};

struct SynthCorpus {
  SynthLexicon lexicon;
  Dataset train;
  Dataset val;
  Dataset test;
};

inline SynthLexicon make_synth_lexicon(const SynthSpec& spec) {
  SynthLexicon lex;
  const std::size_t n_targets = std::max<std::size_t>(spec.n_targets, 1);
  for (std::size_t t = 0; t < n_targets; ++t) {
    std::string name = "topic" + std::to_string(t);
    if (t % 2 == 1) name += " issue" + std::to_string(t);
    lex.target_names.push_back(std::move(name));
  }
  const std::size_t per_group = std::clamp<std::size_t>(spec.vocab_size / 48, 1, 4);
  for (std::size_t g = 0; g < SynthLexicon::kNumLabels; ++g) {
    for (std::size_t k = 0; k < per_group; ++k) {
      lex.stance_words.push_back("stance" + std::to_string(g * per_group + k));
      lex.stance_group.push_back(g);
    }
  }
  const std::size_t used = lex.stance_words.size() + n_targets + n_targets / 2;
  const std::size_t n_distractors = spec.vocab_size > used + 3 ? spec.vocab_size - used : 3;
  for (std::size_t k = 0; k < n_distractors; ++k) lex.distractors.push_back("w" + std::to_string(k));
  return lex;
}

// Deterministic for a given spec on every platform: draws use raw
// mt19937_64 output rather than the implementation-defined distributions.
inline SynthCorpus synth_corpus(const SynthSpec& spec) {
  SynthCorpus corpus;
  corpus.lexicon = make_synth_lexicon(spec);
  const auto& lex = corpus.lexicon;
  std::mt19937_64 rng(spec.seed);
  auto draw = [&rng](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

  const std::size_t min_len = std::max<std::size_t>(spec.min_text_len, 1);
  const std::size_t max_len = std::max(spec.max_text_len, min_len);
  std::vector<std::vector<std::size_t>> words_by_group(SynthLexicon::kNumLabels);
  for (std::size_t w = 0; w < lex.stance_words.size(); ++w) words_by_group[lex.stance_group[w]].push_back(w);

  auto make_split = [&](const std::string& name, std::size_t n) {
    Dataset ds;
    ds.split = name;
    ds.labels = lex.labels;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t target = draw(lex.target_names.size());
      const std::size_t label = draw(SynthLexicon::kNumLabels);
      const std::size_t group = (label + SynthLexicon::kNumLabels - target % SynthLexicon::kNumLabels) %
                                SynthLexicon::kNumLabels;
      const auto& candidates = words_by_group[group];
      const std::size_t word = candidates[draw(candidates.size())];
      const std::size_t len = min_len + draw(max_len - min_len + 1);
      const std::size_t stance_pos = draw(len);
      std::string text;
      for (std::size_t k = 0; k < len; ++k) {
        if (k) text.push_back(' ');
        text += k == stance_pos ? lex.stance_words[word] : lex.distractors[draw(lex.distractors.size())];
      }
      ds.examples.push_back({std::move(text), lex.target_names[target], lex.labels[label]});
    }
    return ds;
  };
  corpus.train = make_split("train", spec.n_train);
  corpus.val = make_split("val", spec.n_val);
  corpus.test = make_split("test", spec.n_test);
  return corpus;
}

// The generator's own labeling rule applied to a raw example; nullopt when the
// example does not contain exactly one stance word or names no known target.
inline std::optional<std::string> synth_oracle_label(const SynthLexicon& lex, const RawExample& ex) {
  std::optional<std::size_t> target;
  for (std::size_t t = 0; t < lex.target_names.size(); ++t)
    if (lex.target_names[t] == ex.target) target = t;
  if (!target) return std::nullopt;
  std::optional<std::size_t> word;
  for (const auto& token : split_words(ex.text)) {
    for (std::size_t w = 0; w < lex.stance_words.size(); ++w) {
      if (lex.stance_words[w] != token) continue;
      if (word) return std::nullopt;
      word = w;
    }
  }
  if (!word) return std::nullopt;
  return lex.labels[lex.label_for(*word, *target)];
}

}  // namespace stanceformer::text

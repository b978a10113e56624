#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stanceformer/encoder/checkpoint.hpp"
#include "stanceformer/encoder/encoder.hpp"
#include "stanceformer/numcore/adam.hpp"
#include "stanceformer/textdata/dataset.hpp"
#include "stanceformer/traineval/metrics.hpp"

namespace stanceformer::eval {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 3e-4;
  std::uint64_t seed = 0;
  std::size_t patience = 5;  // epochs without validation improvement; 0 disables
  Convention convention = Convention::all_labels;

  void validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr", t.lr},
          {"seed", t.seed},     {"patience", t.patience},     {"convention", to_string(t.convention)}};
}

struct EvalReport {
  Scores scores;
  nlohmann::ordered_json config;  // snapshot of whatever produced the predictions
};

// Train/val/test tokenized against one vocabulary (built from the unmasked
// training split) and one label order.
struct EncodedSplits {
  text::Vocabulary vocab;
  std::vector<std::string> labels;
  std::vector<text::TokenizedExample> train, val, test;
};

struct Splits {
  text::Dataset train, val, test;
};

inline void check_label_sets(const Splits& s) {
  for (const auto* other : {&s.val, &s.test}) {
    if (other->labels != s.train.labels) {
      throw DataError("label set of split " + other->split + " differs from the training split");
    }
  }
}

// `mask_targets` swaps every target for the masked representation while the
// vocabulary stays that of the real training data.
inline EncodedSplits encode_splits(const Splits& s, std::size_t max_len, bool mask_targets = false) {
  check_label_sets(s);
  EncodedSplits e;
  e.vocab = text::build_vocabulary(s.train);
  e.labels = s.train.labels;
  auto enc = [&](const text::Dataset& d) {
    return text::encode_dataset(mask_targets ? text::mask_targets(d) : d, e.vocab, max_len);
  };
  e.train = enc(s.train);
  e.val = enc(s.val);
  e.test = enc(s.test);
  return e;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  model::ModelParams<float> params;  // best-on-validation
  std::vector<EpochRecord> history;
  double initial_loss = 0.0;
  std::size_t best_epoch = 0;
  double best_val_f1 = -1.0;
};

template <typename T>
std::vector<std::int32_t> predict_all(std::span<const text::TokenizedExample> examples,
                                      const model::ModelParams<T>& params, const ta::TargetAwarenessConfig& ta_cfg,
                                      std::size_t batch_size = 64) {
  num::NoGradGuard no_grad;
  std::vector<std::int32_t> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    auto chunk = examples.subspan(start, std::min(batch_size, examples.size() - start));
    auto p = model::predict(model::encode(chunk, params, ta_cfg));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
double mean_loss(std::span<const text::TokenizedExample> examples, const model::ModelParams<T>& params,
                 const ta::TargetAwarenessConfig& ta_cfg, std::size_t batch_size = 64) {
  num::NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    auto chunk = examples.subspan(start, std::min(batch_size, examples.size() - start));
    model::ForwardOptions opts;
    opts.training = false;
    auto logits = model::encode(chunk, params, ta_cfg, opts);
    std::vector<std::int32_t> labels;
    for (const auto& ex : chunk) labels.push_back(ex.label_id);
    total += static_cast<double>(num::cross_entropy(logits, std::span<const std::int32_t>(labels)).item()) *
             static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(examples.size());
}

// Test-time scoring; the target-awareness bias is active iff
// ta_cfg.enabled_at_inference.
template <typename T>
Scores evaluate(const model::ModelParams<T>& params, const ta::TargetAwarenessConfig& ta_cfg,
                std::span<const text::TokenizedExample> examples, const std::vector<std::string>& labels,
                Convention convention) {
  if (examples.empty()) throw DataError("evaluate: no examples");
  convention_labels(convention, labels);
  const auto predicted = predict_all(examples, params, ta_cfg);
  std::vector<std::int32_t> gold;
  for (const auto& ex : examples) gold.push_back(ex.label_id);
  return score_predictions(gold, predicted, labels, convention);
}

// Mini-batch Adam with shuffling and dropout driven by train_cfg.seed and
// initialization by model_cfg.seed. Keeps the parameters of the epoch with the
// best validation macro-F1 (earliest on ties) and stops after `patience`
// epochs without improvement.
inline TrainResult train(const EncodedSplits& data, const model::ModelConfig& model_cfg,
                         const ta::TargetAwarenessConfig& ta_cfg, const TrainConfig& train_cfg) {
  train_cfg.validate();
  model_cfg.validate();
  ta_cfg.validate(model_cfg.n_layers, model_cfg.n_heads);
  if (data.train.empty() || data.val.empty()) throw DataError("train: training and validation splits must be non-empty");
  if (model_cfg.n_labels != data.labels.size()) {
    throw ConfigError("model n_labels " + std::to_string(model_cfg.n_labels) + " differs from the " +
                      std::to_string(data.labels.size()) + " dataset labels");
  }
  convention_labels(train_cfg.convention, data.labels);

  auto params = model::ModelParams<float>::init(model_cfg);
  auto tensors = params.tensors();
  num::AdamState<float> adam(num::AdamOptions{train_cfg.lr});
  std::mt19937_64 rng(train_cfg.seed ^ 0x5DEECE66DULL);

  TrainResult result;
  result.initial_loss = mean_loss<float>(data.train, params, ta_cfg);
  result.params = params.clone();

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t since_best = 0;
  std::vector<text::TokenizedExample> batch_examples;
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
      batch_examples.clear();
      for (std::size_t k = start; k < end; ++k) batch_examples.push_back(data.train[order[k]]);
      const auto batch = model::Batch::from(batch_examples, model_cfg.max_len);

      model::ForwardOptions opts;
      opts.training = true;
      opts.rng = &rng;
      auto logits = model::encode(batch, params, ta_cfg, opts);
      auto loss = num::cross_entropy(logits, std::span<const std::int32_t>(batch.labels));
      for (auto& t : tensors) t.zero_grad();
      loss.backward();
      num::adam_step(std::span<num::Tensor<float>>(tensors), adam);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(order.size());
    rec.val_f1 = evaluate(params, ta_cfg, data.val, data.labels, train_cfg.convention).macro_f1;
    result.history.push_back(rec);

    if (rec.val_f1 > result.best_val_f1) {
      result.best_val_f1 = rec.val_f1;
      result.best_epoch = epoch;
      result.params = params.clone();
      since_best = 0;
    } else if (train_cfg.patience > 0 && ++since_best >= train_cfg.patience) {
      break;
    }
  }
  return result;
}

inline TrainResult train(const Splits& splits, const model::ModelConfig& model_cfg,
                         const ta::TargetAwarenessConfig& ta_cfg, const TrainConfig& train_cfg,
                         bool mask_targets = false) {
  auto data = encode_splits(splits, model_cfg.max_len, mask_targets);
  model::ModelConfig cfg = model_cfg;
  cfg.vocab_size = data.vocab.size();
  cfg.n_labels = data.labels.size();
  return train(data, cfg, ta_cfg, train_cfg);
}

}  // namespace stanceformer::eval

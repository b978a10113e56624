#pragma once

// Per-label precision/recall/F1 from a confusion matrix, and macro-F1 over
// the label subset a stance benchmark averages:
//   favor_against  mean over FAVOR and AGAINST only (NONE still costs
//                  precision through false positives)
//   all_labels     mean over every label
//   three_labels   mean over every label of a three-label task

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stanceformer/error.hpp"

namespace stanceformer::eval {

enum class Convention { favor_against, all_labels, three_labels };

inline std::string to_string(Convention c) {
  switch (c) {
    case Convention::favor_against:
      return "favor_against";
    case Convention::all_labels:
      return "all_labels";
    case Convention::three_labels:
      return "three_labels";
  }
  return "unknown";
}

inline Convention parse_convention(const std::string& name) {
  for (auto c : {Convention::favor_against, Convention::all_labels, Convention::three_labels})
    if (to_string(c) == name) return c;
  throw ConfigError("unknown metric convention \"" + name + "\" (expected favor_against, all_labels or three_labels)");
}

namespace detail {
inline std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}
}  // namespace detail

// Label ids averaged under `c`, in label-id order.
inline std::vector<std::size_t> convention_labels(Convention c, const std::vector<std::string>& labels) {
  std::vector<std::size_t> ids;
  switch (c) {
    case Convention::favor_against:
      for (const char* wanted : {"favor", "against"}) {
        auto it = std::find_if(labels.begin(), labels.end(), [&](const auto& l) { return detail::lower(l) == wanted; });
        if (it == labels.end()) {
          throw ConfigError(std::string("convention favor_against needs a label named ") + wanted +
                            " (case-insensitive) in the dataset");
        }
        ids.push_back(static_cast<std::size_t>(it - labels.begin()));
      }
      std::sort(ids.begin(), ids.end());
      break;
    case Convention::three_labels:
      if (labels.size() != 3) {
        throw ConfigError("convention three_labels needs exactly 3 labels, dataset has " +
                          std::to_string(labels.size()));
      }
      [[fallthrough]];
    case Convention::all_labels:
      for (std::size_t i = 0; i < labels.size(); ++i) ids.push_back(i);
      break;
  }
  return ids;
}

struct LabelScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Scores {
  Convention convention = Convention::all_labels;
  std::vector<std::string> labels;
  std::vector<LabelScore> per_label;
  std::vector<std::string> averaged_labels;
  double macro_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  std::size_t n = 0;
};

inline Scores score_predictions(std::span<const std::int32_t> gold, std::span<const std::int32_t> predicted,
                                const std::vector<std::string>& labels, Convention convention) {
  if (gold.size() != predicted.size()) {
    std::ostringstream os;
    os << "score_predictions: " << gold.size() << " gold labels vs " << predicted.size() << " predictions";
    throw DimensionError(os.str());
  }
  const auto subset = convention_labels(convention, labels);
  const std::size_t c = labels.size();
  Scores s;
  s.convention = convention;
  s.labels = labels;
  s.n = gold.size();
  s.confusion.assign(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (auto v : {gold[i], predicted[i]}) {
      if (v < 0 || static_cast<std::size_t>(v) >= c) {
        throw DataError("score_predictions: label id " + std::to_string(v) + " outside label set");
      }
    }
    ++s.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
  }
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t tp = s.confusion[k][k], predicted_k = 0, gold_k = 0;
    for (std::size_t j = 0; j < c; ++j) {
      predicted_k += s.confusion[j][k];
      gold_k += s.confusion[k][j];
    }
    LabelScore ls;
    ls.label = labels[k];
    ls.support = gold_k;
    ls.precision = predicted_k ? static_cast<double>(tp) / static_cast<double>(predicted_k) : 0.0;
    ls.recall = gold_k ? static_cast<double>(tp) / static_cast<double>(gold_k) : 0.0;
    ls.f1 = ls.precision + ls.recall > 0.0 ? 2.0 * ls.precision * ls.recall / (ls.precision + ls.recall) : 0.0;
    s.per_label.push_back(ls);
  }
  double total = 0.0;
  for (auto k : subset) {
    total += s.per_label[k].f1;
    s.averaged_labels.push_back(labels[k]);
  }
  s.macro_f1 = total / static_cast<double>(subset.size());
  return s;
}

}  // namespace stanceformer::eval

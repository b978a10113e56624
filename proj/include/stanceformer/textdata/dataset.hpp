#pragma once

// JSONL dataset ingestion: one {"text", "target", "label"} object per line.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stanceformer/error.hpp"
#include "stanceformer/textdata/example.hpp"
#include "stanceformer/textdata/preprocess.hpp"
#include "stanceformer/textdata/tokenizer.hpp"
#include "stanceformer/textdata/vocabulary.hpp"

namespace stanceformer::text {

struct RawExample {
  std::string text;
  std::string target;
  std::string label;

  bool operator==(const RawExample&) const = default;
};

struct Dataset {
  std::string split;
  std::vector<RawExample> examples;
  // Index in this list is the label id.
  std::vector<std::string> labels;
  // Set only by mask_targets(); targets are then empty on purpose.
  bool targets_masked = false;

  std::size_t size() const { return examples.size(); }
  std::size_t num_labels() const { return labels.size(); }

  std::int32_t label_id(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw DataError("label \"" + label + "\" is not in the label set of split " + split);
    return static_cast<std::int32_t>(it - labels.begin());
  }

  bool operator==(const Dataset&) const = default;
};

inline std::vector<std::string> read_label_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label manifest " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (std::find(labels.begin(), labels.end(), line) != labels.end()) {
      throw DataError("label manifest " + path.string() + " repeats label \"" + line + "\"");
    }
    labels.push_back(line);
  }
  if (labels.empty()) throw DataError("label manifest " + path.string() + " is empty");
  return labels;
}

// Parses and preprocesses a JSONL stream. With no manifest the label set is
// the sorted set of distinct labels seen.
inline Dataset parse_jsonl(std::istream& in, const std::string& source, const std::string& split,
                           const std::optional<std::vector<std::string>>& manifest = std::nullopt) {
  Dataset ds;
  ds.split = split;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    std::ostringstream os;
    os << source << ":" << line_no << ": " << what;
    throw DataError(os.str());
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed JSON (") + e.what() + ")");
    }
    if (!obj.is_object()) fail("expected a JSON object");
    RawExample ex;
    for (auto [key, field] : {std::pair{"text", &ex.text}, std::pair{"target", &ex.target},
                              std::pair{"label", &ex.label}}) {
      auto it = obj.find(key);
      if (it == obj.end()) fail(std::string("missing key \"") + key + "\"");
      if (!it->is_string()) fail(std::string("key \"") + key + "\" must be a string");
      *field = it->get<std::string>();
    }
    ex.text = preprocess(ex.text);
    ex.target = preprocess(ex.target);
    if (ex.text.empty()) fail("text is empty after preprocessing");
    if (ex.target.empty()) fail("target is empty after preprocessing");
    if (manifest && std::find(manifest->begin(), manifest->end(), ex.label) == manifest->end()) {
      fail("label \"" + ex.label + "\" is not in the label manifest");
    }
    seen.insert(ex.label);
    ds.examples.push_back(std::move(ex));
  }
  ds.labels = manifest ? *manifest : std::vector<std::string>(seen.begin(), seen.end());
  return ds;
}

inline Dataset load_jsonl(const std::filesystem::path& path, const std::string& split = "train",
                          const std::optional<std::vector<std::string>>& manifest = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return parse_jsonl(in, path.string(), split, manifest);
}

inline void write_jsonl(const Dataset& ds, std::ostream& out) {
  for (const auto& ex : ds.examples) {
    nlohmann::ordered_json obj;
    obj["text"] = ex.text;
    obj["target"] = ex.target;
    obj["label"] = ex.label;
    out << obj.dump() << '\n';
  }
}

inline void write_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_jsonl(ds, out);
}

// Hides every target while keeping the example count and labels.
inline Dataset mask_targets(Dataset ds) {
  for (auto& ex : ds.examples) ex.target.clear();
  ds.targets_masked = true;
  return ds;
}

// Vocabulary over the words of a split's texts and targets, in sorted order.
inline Vocabulary build_vocabulary(const Dataset& ds) {
  std::set<std::string> words;
  for (const auto& ex : ds.examples) {
    for (auto& w : split_words(ex.text)) words.insert(std::move(w));
    for (auto& w : split_words(ex.target)) words.insert(std::move(w));
  }
  std::vector<std::string> ordered(words.begin(), words.end());
  return Vocabulary::from_tokens(ordered);
}

// Masked datasets get a single [UNK] in the target slot so the layout (and
// the target-awareness block) matches the unmasked arm.
inline std::vector<TokenizedExample> encode_dataset(const Dataset& ds, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<TokenizedExample> out;
  out.reserve(ds.size());
  const std::vector<TokenId> masked_target{kUnk};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& ex = ds.examples[i];
    const auto text_ids = tokenize(ex.text, vocab);
    std::vector<TokenId> target_ids;
    if (ds.targets_masked) {
      target_ids = masked_target;
    } else {
      target_ids = tokenize(ex.target, vocab);
      if (target_ids.empty()) {
        throw DataError("split " + ds.split + ", example " + std::to_string(i) + ": target has no tokens");
      }
    }
    out.push_back(assemble(text_ids, target_ids, max_len, ds.label_id(ex.label)));
  }
  return out;
}

}  // namespace stanceformer::text

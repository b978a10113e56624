#pragma once

// Self-describing JSON checkpoint: model config (plus its hash), the
// target-awareness settings, label manifest, vocabulary and every parameter.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stanceformer/encoder/params.hpp"
#include "stanceformer/tamatrix/target_awareness.hpp"
#include "stanceformer/textdata/vocabulary.hpp"

namespace stanceformer::model {

inline constexpr const char* kCheckpointFormat = "stanceformer-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},       {"d_model", c.d_model},
          {"d_ff", c.d_ff},         {"vocab_size", c.vocab_size}, {"max_len", c.max_len},
          {"n_labels", c.n_labels}, {"dropout", c.dropout},       {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.n_labels = j.at("n_labels").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json to_json(const ta::TargetAwarenessConfig& t) {
  return {{"alpha", t.alpha}, {"placement", t.placement.to_string()}, {"enabled_at_inference", t.enabled_at_inference}};
}

inline ta::TargetAwarenessConfig ta_config_from_json(const nlohmann::json& j) {
  ta::TargetAwarenessConfig t;
  t.alpha = j.at("alpha").get<double>();
  t.placement = ta::Placement::parse(j.at("placement").get<std::string>());
  t.enabled_at_inference = j.at("enabled_at_inference").get<bool>();
  return t;
}

// 64-bit FNV-1a of the canonical (key-sorted, compact) JSON text.
inline std::string config_hash(const ModelConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct Checkpoint {
  ModelParams<float> params;
  ta::TargetAwarenessConfig ta;
  std::vector<std::string> labels;
  text::Vocabulary vocab;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(ck.params.config);
  j["config_hash"] = config_hash(ck.params.config);
  j["target_awareness"] = to_json(ck.ta);
  j["labels"] = ck.labels;
  j["vocab"] = ck.vocab.tokens();
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : ck.params.named()) {
    params[name] = {{"shape", t.shape()}, {"data", std::vector<float>(t.data().begin(), t.data().end())}};
  }
  j["params"] = std::move(params);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& what) { throw DataError("checkpoint: " + what); };
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) fail("unrecognized format tag");
    if (j.at("version").get<int>() != kCheckpointVersion) fail("unsupported version");
    const ModelConfig cfg = model_config_from_json(j.at("config"));
    if (config_hash(cfg) != j.at("config_hash").get<std::string>()) fail("config hash mismatch");

    Checkpoint ck;
    ck.params = ModelParams<float>::shaped(cfg);
    ck.ta = ta_config_from_json(j.at("target_awareness"));
    ck.ta.validate(cfg.n_layers, cfg.n_heads);
    ck.labels = j.at("labels").get<std::vector<std::string>>();
    if (ck.labels.size() != cfg.n_labels) fail("label count differs from config n_labels");
    const auto tokens = j.at("vocab").get<std::vector<std::string>>();
    if (tokens.size() != cfg.vocab_size || tokens.size() < 4) fail("vocabulary size differs from config");
    ck.vocab = text::Vocabulary::from_tokens(std::span<const std::string>(tokens).subspan(4));
    if (ck.vocab.tokens() != tokens) fail("vocabulary special tokens or ordering are invalid");

    const auto& params = j.at("params");
    for (auto& [name, t] : ck.params.named()) {
      const auto& entry = params.at(name);
      if (entry.at("shape").get<num::Shape>() != t.shape()) fail("parameter " + name + " has the wrong shape");
      const auto values = entry.at("data").get<std::vector<float>>();
      if (values.size() != t.size()) fail("parameter " + name + " has the wrong element count");
      std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }
    if (params.size() != ck.params.named().size()) fail("unexpected extra parameters");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }
  return {};
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ck).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace stanceformer::model

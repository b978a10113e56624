#pragma once

// Flat dotted-key configuration: defaults < config file < command-line flags.
// Unknown keys are errors wherever they appear. The resolved view is written
// verbatim into every run directory and can be fed back with --config.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stanceformer/encoder/config.hpp"
#include "stanceformer/error.hpp"
#include "stanceformer/tamatrix/target_awareness.hpp"
#include "stanceformer/textdata/synth.hpp"
#include "stanceformer/traineval/grid_search.hpp"
#include "stanceformer/traineval/trainer.hpp"

namespace stanceformer::cli {

struct KeySpec {
  const char* key;
  const char* default_value;
  const char* help;
};

inline const std::vector<KeySpec>& known_keys() {
  static const std::vector<KeySpec> keys{
      {"seed", "0", "run seed: model initialization, shuffling and dropout"},
      {"out", "runs", "output directory"},
      {"data.source", "jsonl", "jsonl | synth"},
      {"data.train", "", "training split (JSONL)"},
      {"data.val", "", "validation split (JSONL)"},
      {"data.test", "", "test split (JSONL)"},
      {"data.labels", "", "optional label manifest, one label per line"},
      {"synth.seed", "1", "synthetic corpus seed"},
      {"synth.n_train", "512", "synthetic training examples"},
      {"synth.n_val", "128", "synthetic validation examples"},
      {"synth.n_test", "128", "synthetic test examples"},
      {"synth.n_targets", "4", "synthetic targets"},
      {"synth.vocab_size", "50", "synthetic word types"},
      {"model.n_layers", "2", "encoder layers"},
      {"model.n_heads", "4", "attention heads per layer"},
      {"model.d_model", "64", "hidden width"},
      {"model.d_ff", "128", "feed-forward width"},
      {"model.max_len", "48", "padded sequence length"},
      {"model.dropout", "0.1", "dropout rate during training"},
      {"train.epochs", "30", "maximum epochs"},
      {"train.batch_size", "32", "mini-batch size"},
      {"train.lr", "0.0003", "Adam learning rate"},
      {"train.patience", "5", "early-stopping patience on validation macro-F1 (0 disables)"},
      {"train.convention", "all_labels", "favor_against | all_labels | three_labels"},
      {"ta.alpha", "0.5", "target-awareness weight"},
      {"ta.placement", "all", "all | comma-separated layer:head sites"},
      {"ta.enabled_at_inference", "true", "keep the bias at evaluation time"},
      {"grid.alphas", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0", "alpha grid"},
      {"ablate.seeds", "0,1,2", "seeds per ablation arm"},
      {"ablate.alpha_search", "true", "grid-search alpha on the first seed instead of using ta.alpha"},
      {"eval.checkpoint", "", "checkpoint to evaluate"},
      {"attention.checkpoint", "", "checkpoint to inspect"},
      {"attention.examples", "", "JSONL examples to inspect"},
      {"attention.sites", "all", "all | comma-separated layer:head sites to dump"},
  };
  return keys;
}

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}
}  // namespace detail

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : known_keys()) values_[k.key] = k.default_value;
  }

  static bool is_known(const std::string& key) {
    return std::any_of(known_keys().begin(), known_keys().end(), [&](const KeySpec& k) { return key == k.key; });
  }

  void set(const std::string& key, const std::string& value) {
    if (!is_known(key)) throw ConfigError("unknown config key \"" + key + "\"");
    values_[key] = detail::trim(value);
    explicit_.insert(key);
  }

  // "key = value" lines; '#' starts a comment line.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = detail::trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      const std::string where = path.string() + ":" + std::to_string(line_no);
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = detail::trim(t.substr(0, eq));
      if (!is_known(key)) throw ConfigError(where + ": unknown config key \"" + key + "\"");
      set(key, t.substr(eq + 1));
    }
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key \"" + key + "\"");
    return it->second;
  }

  bool explicitly_set(const std::string& key) const { return explicit_.contains(key); }

  std::uint64_t get_u64(const std::string& key) const { return parse_u64(key, get(key)); }
  std::size_t get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

  double get_double(const std::string& key) const { return parse_double(key, get(key)); }

  bool get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got \"" + v + "\"");
  }

  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : detail::split_list(get(key))) out.push_back(parse_double(key, item));
    if (out.empty()) throw ConfigError(key + ": expected a non-empty comma-separated list");
    return out;
  }

  std::vector<std::uint64_t> get_u64s(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& item : detail::split_list(get(key))) out.push_back(parse_u64(key, item));
    if (out.empty()) throw ConfigError(key + ": expected a non-empty comma-separated list");
    return out;
  }

  model::ModelConfig model_config() const {
    model::ModelConfig m;
    m.n_layers = get_size("model.n_layers");
    m.n_heads = get_size("model.n_heads");
    m.d_model = get_size("model.d_model");
    m.d_ff = get_size("model.d_ff");
    m.max_len = get_size("model.max_len");
    m.dropout = get_double("model.dropout");
    m.seed = get_u64("seed");
    return m;
  }

  eval::TrainConfig train_config() const {
    eval::TrainConfig t;
    t.epochs = get_size("train.epochs");
    t.batch_size = get_size("train.batch_size");
    t.lr = get_double("train.lr");
    t.patience = get_size("train.patience");
    try {
      t.convention = eval::parse_convention(get("train.convention"));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("train.convention: ") + e.what());
    }
    t.seed = get_u64("seed");
    t.validate();
    return t;
  }

  ta::TargetAwarenessConfig ta_config() const {
    ta::TargetAwarenessConfig a;
    a.alpha = get_double("ta.alpha");
    try {
      a.placement = ta::Placement::parse(get("ta.placement"));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("ta.placement: ") + e.what());
    }
    a.enabled_at_inference = get_bool("ta.enabled_at_inference");
    if (!(a.alpha >= 0.0)) throw ConfigError("ta.alpha must be non-negative");
    return a;
  }

  text::SynthSpec synth_spec() const {
    text::SynthSpec s;
    s.seed = get_u64("synth.seed");
    s.n_train = get_size("synth.n_train");
    s.n_val = get_size("synth.n_val");
    s.n_test = get_size("synth.n_test");
    s.n_targets = get_size("synth.n_targets");
    s.vocab_size = get_size("synth.vocab_size");
    for (auto k : {"synth.n_train", "synth.n_val", "synth.n_test", "synth.n_targets", "synth.vocab_size"})
      if (get_size(k) < 1) throw ConfigError(std::string(k) + " must be at least 1");
    return s;
  }

  // Parses every typed key so that bad values surface before any work starts.
  void validate() const {
    model_config();
    train_config();
    ta_config();
    synth_spec();
    for (const auto& a : get_doubles("grid.alphas"))
      if (!(a >= 0.0)) throw ConfigError("grid.alphas: values must be non-negative");
    get_u64s("ablate.seeds");
    get_bool("ablate.alpha_search");
    try {
      ta::Placement::parse(get("attention.sites"));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("attention.sites: ") + e.what());
    }
    const auto& src = get("data.source");
    if (src != "jsonl" && src != "synth") throw ConfigError("data.source: expected jsonl or synth, got \"" + src + "\"");
  }

  // Sorted "key = value" lines; a valid config file in its own right.
  std::string snapshot() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

 private:
  static std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
      throw ConfigError(key + ": expected a non-negative integer, got \"" + v + "\"");
    }
    return out;
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got \"" + v + "\"");
    }
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

}  // namespace stanceformer::cli

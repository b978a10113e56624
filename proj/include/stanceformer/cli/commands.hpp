#pragma once

// The six CLI commands. Each writes into a fresh run directory that only
// appears under --out once every artifact is complete.

#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stanceformer/cli/run_config.hpp"
#include "stanceformer/encoder/checkpoint.hpp"
#include "stanceformer/encoder/encoder.hpp"
#include "stanceformer/textdata/dataset.hpp"
#include "stanceformer/textdata/synth.hpp"
#include "stanceformer/traineval/ablation.hpp"
#include "stanceformer/traineval/grid_search.hpp"
#include "stanceformer/traineval/report_io.hpp"
#include "stanceformer/traineval/trainer.hpp"

namespace stanceformer::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train", "eval", "gridsearch", "ablate", "attention", "synth"};
  return names;
}

// "--key value" or "--key=value" pairs, in order.
inline std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() <= 2) throw UsageError("unexpected argument \"" + a + "\"");
    std::string key = a.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= args.size()) throw UsageError("flag --" + key + " needs a value");
      value = args[++i];
    }
    if (!RunConfig::is_known(key)) throw ConfigError("unknown config key \"" + key + "\"");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

// defaults < config file < flags
inline RunConfig resolve_config(const std::optional<fs::path>& config_file,
                                const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig cfg;
  if (config_file) cfg.load_file(*config_file);
  for (const auto& [k, v] : flags) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw Error("write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return os.str();
}

// Artifacts go to a hidden staging directory; commit() renames it to
// <out>/<command>-<utc>-<seed>, adding -2, -3, … rather than overwriting.
class RunDirectory {
 public:
  RunDirectory(const fs::path& out, const std::string& command, std::uint64_t seed)
      : out_(out), base_(command + "-" + utc_stamp() + "-" + std::to_string(seed)) {
    fs::create_directories(out_);
    staging_ = out_ / (".staging-" + base_ + "-" + std::to_string(::getpid()));
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  ~RunDirectory() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  const fs::path& path() const { return staging_; }

  fs::path commit() {
    fs::path target = out_ / base_;
    for (int n = 2; fs::exists(target); ++n) target = out_ / (base_ + "-" + std::to_string(n));
    fs::rename(staging_, target);
    committed_ = true;
    return target;
  }

 private:
  fs::path out_;
  std::string base_;
  fs::path staging_;
  bool committed_ = false;
};

inline eval::Splits load_splits(const RunConfig& cfg) {
  if (cfg.get("data.source") == "synth") {
    auto corpus = text::synth_corpus(cfg.synth_spec());
    return {std::move(corpus.train), std::move(corpus.val), std::move(corpus.test)};
  }
  for (const char* key : {"data.train", "data.val", "data.test"}) {
    if (cfg.get(key).empty()) throw ConfigError(std::string(key) + " is required when data.source = jsonl");
  }
  std::optional<std::vector<std::string>> manifest;
  if (!cfg.get("data.labels").empty()) manifest = text::read_label_manifest(cfg.get("data.labels"));
  eval::Splits s;
  s.train = text::load_jsonl(cfg.get("data.train"), "train", manifest);
  s.val = text::load_jsonl(cfg.get("data.val"), "val", s.train.labels);
  s.test = text::load_jsonl(cfg.get("data.test"), "test", s.train.labels);
  return s;
}

inline model::ModelConfig sized_model(const RunConfig& cfg, const eval::EncodedSplits& data) {
  auto m = cfg.model_config();
  m.vocab_size = data.vocab.size();
  m.n_labels = data.labels.size();
  m.validate();
  return m;
}

inline nlohmann::ordered_json report_header(const std::string& command, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config"] = cfg.to_json();
  return j;
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

inline fs::path cmd_train(const RunConfig& cfg) {
  const auto splits = load_splits(cfg);
  const auto data = eval::encode_splits(splits, cfg.get_size("model.max_len"));
  const auto m = sized_model(cfg, data);
  const auto ta_cfg = cfg.ta_config();
  const auto t = cfg.train_config();

  RunDirectory dir(cfg.get("out"), "train", cfg.get_u64("seed"));
  write_text(dir.path() / "config.snapshot", cfg.snapshot());
  auto trained = eval::train(data, m, ta_cfg, t);
  const auto scores = eval::evaluate(trained.params, ta_cfg, data.test, data.labels, t.convention);

  model::save_checkpoint({trained.params, ta_cfg, data.labels, data.vocab}, dir.path() / "checkpoint.json");
  write_text(dir.path() / "history.csv", eval::history_csv(trained.history));
  auto report = report_header("train", cfg);
  report["config_hash"] = model::config_hash(m);
  report["initial_loss"] = trained.initial_loss;
  report["epochs_run"] = trained.history.size();
  report["best_epoch"] = trained.best_epoch;
  report["best_val_f1"] = trained.best_val_f1;
  report["test"] = eval::to_json(scores);
  write_json(dir.path() / "report.json", report);
  return dir.commit();
}

// Scores a saved checkpoint on the test split. The checkpoint's
// target-awareness settings apply unless ta.* keys were set explicitly.
inline fs::path cmd_eval(const RunConfig& cfg) {
  if (cfg.get("eval.checkpoint").empty()) throw ConfigError("eval.checkpoint is required");
  const auto ck = model::load_checkpoint(cfg.get("eval.checkpoint"));
  text::Dataset test;
  if (cfg.get("data.source") == "synth") {
    test = text::synth_corpus(cfg.synth_spec()).test;
    if (test.labels != ck.labels) throw DataError("synthetic label set differs from the checkpoint labels");
  } else {
    if (cfg.get("data.test").empty()) throw ConfigError("data.test is required when data.source = jsonl");
    test = text::load_jsonl(cfg.get("data.test"), "test", ck.labels);
  }
  auto ta_cfg = ck.ta;
  if (cfg.explicitly_set("ta.alpha")) ta_cfg.alpha = cfg.get_double("ta.alpha");
  if (cfg.explicitly_set("ta.placement")) ta_cfg.placement = ta::Placement::parse(cfg.get("ta.placement"));
  if (cfg.explicitly_set("ta.enabled_at_inference")) ta_cfg.enabled_at_inference = cfg.get_bool("ta.enabled_at_inference");
  ta_cfg.validate(ck.params.config.n_layers, ck.params.config.n_heads);

  const auto examples = text::encode_dataset(test, ck.vocab, ck.params.config.max_len);
  const auto convention = eval::parse_convention(cfg.get("train.convention"));
  const auto scores = eval::evaluate(ck.params, ta_cfg, examples, ck.labels, convention);

  RunDirectory dir(cfg.get("out"), "eval", cfg.get_u64("seed"));
  write_text(dir.path() / "config.snapshot", cfg.snapshot());
  auto report = report_header("eval", cfg);
  report["config_hash"] = model::config_hash(ck.params.config);
  report["target_awareness"] = model::to_json(ta_cfg);
  report["test"] = eval::to_json(scores);
  write_json(dir.path() / "report.json", report);
  return dir.commit();
}

inline fs::path cmd_gridsearch(const RunConfig& cfg) {
  const auto splits = load_splits(cfg);
  const auto data = eval::encode_splits(splits, cfg.get_size("model.max_len"));
  const auto m = sized_model(cfg, data);
  const auto ta_cfg = cfg.ta_config();
  const auto t = cfg.train_config();
  const auto alphas = cfg.get_doubles("grid.alphas");
  for (double a : alphas) {
    auto probe = ta_cfg;
    probe.alpha = a;
    probe.validate(m.n_layers, m.n_heads);
  }

  RunDirectory dir(cfg.get("out"), "gridsearch", cfg.get_u64("seed"));
  write_text(dir.path() / "config.snapshot", cfg.snapshot());
  const auto grid = eval::grid_search_alpha(data, m, ta_cfg, t, alphas);
  write_text(dir.path() / "grid.csv", eval::grid_csv(grid));
  auto report = report_header("gridsearch", cfg);
  report["grid"] = eval::to_json(grid);
  write_json(dir.path() / "report.json", report);
  return dir.commit();
}

inline fs::path cmd_ablate(const RunConfig& cfg) {
  const auto splits = load_splits(cfg);
  const auto m = cfg.model_config();
  const auto ta_cfg = cfg.ta_config();
  const auto t = cfg.train_config();
  const auto seeds = cfg.get_u64s("ablate.seeds");

  RunDirectory dir(cfg.get("out"), "ablate", cfg.get_u64("seed"));
  write_text(dir.path() / "config.snapshot", cfg.snapshot());
  const auto result = cfg.get_bool("ablate.alpha_search")
                          ? eval::run_ablation_with_grid(splits, m, t, ta_cfg, cfg.get_doubles("grid.alphas"), seeds)
                          : eval::run_ablation(splits, m, t, ta_cfg, ta_cfg.alpha, seeds);
  write_text(dir.path() / "ablation.md", eval::ablation_markdown(result));
  if (result.grid) write_text(dir.path() / "grid.csv", eval::grid_csv(*result.grid));
  auto report = report_header("ablate", cfg);
  report["ablation"] = eval::to_json(result);
  write_json(dir.path() / "report.json", report);
  return dir.commit();
}

// One JSON file per example with the selected post-softmax maps and, per map,
// the target mass of every row. "mean_target_mass" averages the rows inside
// the target span over all selected maps.
inline nlohmann::ordered_json attention_dump(std::size_t index, const text::RawExample& raw,
                                             const text::TokenizedExample& ex, const model::Checkpoint& ck,
                                             const ta::TargetAwarenessConfig& ta_cfg, const ta::Placement& sites) {
  const std::size_t seq = ex.seq();
  nlohmann::ordered_json j;
  j["example"] = index;
  j["text"] = raw.text;
  j["target"] = raw.target;
  j["label"] = raw.label;
  std::vector<std::string> tokens;
  for (auto id : ex.ids) tokens.push_back(ck.vocab.token(id));
  j["tokens"] = tokens;
  j["target_span"] = {ex.target_span.begin, ex.target_span.end};
  j["pad_len"] = ex.pad_len;
  j["alpha"] = ta_cfg.alpha;

  nlohmann::ordered_json maps = nlohmann::ordered_json::array();
  double mass_sum = 0.0;
  std::size_t mass_rows = 0;
  for (const auto& map : model::attention_maps(ex, ck.params, ta_cfg)) {
    if (!sites.contains(map.layer, map.head)) continue;
    std::vector<std::vector<double>> rows(seq);
    std::vector<double> mass(seq);
    for (std::size_t r = 0; r < seq; ++r) {
      rows[r].assign(map.weights.begin() + static_cast<std::ptrdiff_t>(r * seq),
                     map.weights.begin() + static_cast<std::ptrdiff_t>((r + 1) * seq));
      mass[r] = ta::target_mass<double>(map.weights, seq, r, ex.target_span);
      if (ex.target_span.contains(r)) {
        mass_sum += mass[r];
        ++mass_rows;
      }
    }
    maps.push_back({{"layer", map.layer}, {"head", map.head}, {"weights", rows}, {"target_mass", mass}});
  }
  j["maps"] = std::move(maps);
  j["mean_target_mass"] = mass_rows ? mass_sum / static_cast<double>(mass_rows) : 0.0;
  return j;
}

inline fs::path cmd_attention(const RunConfig& cfg) {
  if (cfg.get("attention.checkpoint").empty()) throw ConfigError("attention.checkpoint is required");
  if (cfg.get("attention.examples").empty()) throw ConfigError("attention.examples is required");
  const auto ck = model::load_checkpoint(cfg.get("attention.checkpoint"));
  auto ta_cfg = ck.ta;
  if (cfg.explicitly_set("ta.alpha")) ta_cfg.alpha = cfg.get_double("ta.alpha");
  if (cfg.explicitly_set("ta.placement")) ta_cfg.placement = ta::Placement::parse(cfg.get("ta.placement"));
  ta_cfg.validate(ck.params.config.n_layers, ck.params.config.n_heads);
  const auto sites = ta::Placement::parse(cfg.get("attention.sites"));
  ta::TargetAwarenessConfig{0.0, sites, true}.validate(ck.params.config.n_layers, ck.params.config.n_heads);

  const auto ds = text::load_jsonl(cfg.get("attention.examples"), "attention", ck.labels);
  const auto examples = text::encode_dataset(ds, ck.vocab, ck.params.config.max_len);

  RunDirectory dir(cfg.get("out"), "attention", cfg.get_u64("seed"));
  write_text(dir.path() / "config.snapshot", cfg.snapshot());
  fs::create_directories(dir.path() / "attention");
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto dump = attention_dump(i, ds.examples[i], examples[i], ck, ta_cfg, sites);
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i << ".json";
    write_json(dir.path() / "attention" / name.str(), dump);
    summary.push_back({{"example", i}, {"mean_target_mass", dump["mean_target_mass"]}});
    total += dump["mean_target_mass"].get<double>();
  }
  auto report = report_header("attention", cfg);
  report["target_awareness"] = model::to_json(ta_cfg);
  report["examples"] = std::move(summary);
  report["mean_target_mass"] = examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
  write_json(dir.path() / "report.json", report);
  return dir.commit();
}

// Writes train/val/test.jsonl straight into --out; each file is staged and
// renamed so a failure never leaves a truncated split behind.
inline fs::path cmd_synth(const RunConfig& cfg) {
  const auto corpus = text::synth_corpus(cfg.synth_spec());
  const fs::path out = cfg.get("out");
  fs::create_directories(out);
  for (const auto* ds : {&corpus.train, &corpus.val, &corpus.test}) {
    const fs::path final_path = out / (ds->split + ".jsonl");
    const fs::path staging = out / (".staging-" + ds->split + ".jsonl");
    text::write_jsonl(*ds, staging);
    fs::rename(staging, final_path);
  }
  return out;
}

inline fs::path run_command(const std::string& command, const RunConfig& cfg) {
  if (command == "train") return cmd_train(cfg);
  if (command == "eval") return cmd_eval(cfg);
  if (command == "gridsearch") return cmd_gridsearch(cfg);
  if (command == "ablate") return cmd_ablate(cfg);
  if (command == "attention") return cmd_attention(cfg);
  if (command == "synth") return cmd_synth(cfg);
  throw UsageError("unknown command \"" + command + "\"");
}

// Runs `body`, reporting any failure on `err` and mapping it to an exit code.
template <typename F>
int guarded(F&& body, std::ostream& err) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace stanceformer::cli
